"""
Error hierarchy for foildiff.
Every error carries the exit status the command line returns for it.
"""


class FoilDiffError(Exception):
    """Base class for all foildiff errors."""

    exit_code = 1


class ConfigError(FoilDiffError, ValueError):
    """Invalid run configuration or invalid combination of parameters."""

    exit_code = 2


class ScheduleError(ConfigError):
    """Noise schedule parameters outside their domain."""


class TimestepError(ScheduleError, IndexError):
    """Timestep index outside 1..T."""


class PlanError(ConfigError):
    """Invalid sampler plan, stride or sigma for a step."""


class ProtocolError(ConfigError):
    """Ensemble protocol cannot produce the requested statistics."""


class InferenceError(ConfigError):
    """Model, condition and field shapes do not fit together."""


class DataError(FoilDiffError, ValueError):
    """Invalid or unreadable data."""

    exit_code = 3


class NormalizationError(DataError):
    """Freestream values cannot normalize a raw case."""


class ConditionError(DataError):
    """Physical parameters cannot be encoded as a condition."""


class StatisticsError(DataError):
    """Not enough replicates for case statistics."""


class ParseError(DataError):
    """Malformed sample file or manifest."""


class SampleValidationError(DataError):
    """A parsed sample violates a field-sample invariant."""


class ArchiveImportError(DataError):
    """Upstream archive could not be imported completely."""

    def __init__(self, message: str, salvageable=None):
        super().__init__(message)
        self.salvageable = list(salvageable or [])


class EvaluationError(DataError):
    """Reference statistics missing or inconsistent for evaluation."""


class NumericalError(FoilDiffError, ArithmeticError):
    """Non-finite values during training or inference."""

    exit_code = 4

    def __init__(self, message: str, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}
