"""
Field Samples
In-memory records for one simulated flow field, the per-case reference
statistics and the case split.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional

import numpy as np

from utils.errors import SampleValidationError

# Channel order of the six-channel tensor: condition first, then target.
CHANNEL_NAMES = ("mask", "re_cos", "re_sin", "pressure", "velocity_x", "velocity_y")
TARGET_NAMES = CHANNEL_NAMES[3:]


class Subset(str, Enum):
    TRAINING = "Training"
    TEST = "Test"


class Category(str, Enum):
    LOW = "Low"
    HIGH = "High"


class Region(str, Enum):
    INTERPOLATION = "Interpolation"
    EXTRAPOLATION = "Extrapolation"


@dataclass(frozen=True)
class SampleMeta:
    case_id: int
    reynolds: float
    alpha_deg: float
    replicate: int


@dataclass(eq=False)
class FieldSample:
    """Condition (mask, Re cos a, Re sin a) and target (p, u_x, u_y) on one grid."""

    condition: np.ndarray
    target: np.ndarray
    meta: SampleMeta

    @property
    def mask(self) -> np.ndarray:
        return self.condition[0]

    @property
    def fluid(self) -> np.ndarray:
        """Boolean map of cells outside the obstacle."""
        return self.condition[0] < 0.5

    @property
    def shape(self):
        return self.target.shape[1:]

    def stacked(self) -> np.ndarray:
        """The six-channel tensor in file order."""
        return np.concatenate([self.condition, self.target], axis=0)

    def validate(self, re_max: Optional[float] = None, atol: float = 1e-5) -> "FieldSample":
        """Raise SampleValidationError unless every field-sample invariant holds."""
        where = f"case {self.meta.case_id} replicate {self.meta.replicate}"
        if self.condition.ndim != 3 or self.condition.shape[0] != 3:
            raise SampleValidationError(f"{where}: condition must be 3 x H x W, got {self.condition.shape}")
        if self.target.ndim != 3 or self.target.shape[0] != 3:
            raise SampleValidationError(f"{where}: target must be 3 x H x W, got {self.target.shape}")
        if self.condition.shape[1:] != self.target.shape[1:]:
            raise SampleValidationError(
                f"{where}: condition grid {self.condition.shape[1:]} differs from target grid {self.target.shape[1:]}"
            )
        for name, plane in zip(CHANNEL_NAMES, self.stacked()):
            if not np.isfinite(plane).all():
                raise SampleValidationError(f"{where}: channel {name} holds non-finite values")
        if not np.isin(self.mask, (0.0, 1.0)).all():
            raise SampleValidationError(f"{where}: mask channel holds values other than 0 and 1")
        for index in (1, 2):
            plane = self.condition[index]
            if np.ptp(plane) > atol:
                raise SampleValidationError(f"{where}: channel {CHANNEL_NAMES[index]} is not spatially constant")
        solid = ~self.fluid
        for name, plane in zip(TARGET_NAMES, self.target):
            if np.any(plane[solid] != 0):
                raise SampleValidationError(f"{where}: channel {name} is nonzero inside the obstacle")
        if re_max is not None:
            alpha = np.deg2rad(self.meta.alpha_deg)
            expected = (self.meta.reynolds * np.cos(alpha) / re_max, self.meta.reynolds * np.sin(alpha) / re_max)
            actual = (float(self.condition[1].flat[0]), float(self.condition[2].flat[0]))
            if not np.allclose(actual, expected, atol=atol):
                raise SampleValidationError(
                    f"{where}: parametric channels {actual} do not encode Re={self.meta.reynolds:g}, "
                    f"alpha={self.meta.alpha_deg:g} deg with re_max={re_max:g}"
                )
        return self


@dataclass(eq=False)
class CaseStatistics:
    """Pointwise reference mean and standard deviation over the replicates of one case."""

    case_id: int
    mean: np.ndarray
    std: np.ndarray
    replicates: int


@dataclass(frozen=True)
class CaseInfo:
    case_id: int
    reynolds: float
    alpha_deg: float
    subset: Subset
    category: Category
    region: Region


@dataclass
class CaseSplit:
    """Case id -> split assignment."""

    cases: Dict[int, CaseInfo] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cases)

    def __iter__(self) -> Iterator[CaseInfo]:
        return iter(self.cases[k] for k in sorted(self.cases))

    def __contains__(self, case_id: int) -> bool:
        return case_id in self.cases

    def __getitem__(self, case_id: int) -> CaseInfo:
        return self.cases[case_id]

    def add(self, info: CaseInfo):
        existing = self.cases.get(info.case_id)
        if existing is not None and existing != info:
            raise SampleValidationError(
                f"case {info.case_id} is assigned inconsistently: {existing} vs {info}"
            )
        self.cases[info.case_id] = info

    def ids(self, subset: Optional[Subset] = None, category: Optional[Category] = None,
            region: Optional[Region] = None) -> List[int]:
        """Sorted case ids matching every given filter."""
        return [
            info.case_id for info in self
            if (subset is None or info.subset == subset)
            and (category is None or info.category == category)
            and (region is None or info.region == region)
        ]


@dataclass
class Dataset:
    """Loaded samples with their split and the condition scale."""

    samples: List[FieldSample]
    split: CaseSplit
    re_max: float

    def __len__(self) -> int:
        return len(self.samples)

    def for_case(self, case_id: int) -> List[FieldSample]:
        return sorted((s for s in self.samples if s.meta.case_id == case_id), key=lambda s: s.meta.replicate)

    def for_subset(self, subset: Subset) -> List[FieldSample]:
        ids = set(self.split.ids(subset=subset))
        return [s for s in self.samples if s.meta.case_id in ids]

    def case_ids(self) -> List[int]:
        return sorted({s.meta.case_id for s in self.samples})
