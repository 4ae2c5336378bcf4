"""
Config Manager
This module loads run configurations, applies command-line overrides and
validates the whole tree into typed records before any work starts.

Config files are JSON documents holding any subset of the default tree.
Overrides use ``--set dotted.path=value``; the value is parsed as a JSON
literal (``3``, ``2e-4``, ``true``, ``null``, ``[7, 9]``) and falls back to
a plain string.
"""

import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from diffusion.samplers import SamplerKind, SamplerPlan, SigmaMode, SigmaRule
from diffusion.schedules import NoiseSchedule, make_schedule
from models.config import DenoiserConfig
from utils.errors import ConfigError
from .defaults import RunDefaults

logger = logging.getLogger(__name__)

ABLATION_VARIANTS = ("dit", "uvit", "unet_mid", "none_skipless_dit", "ddpm_full")
OPTIMIZERS = ("adam", "adamw")
EVALUATION_SUBSETS = ("Test", "Training", "All")


def _integer(path: str, value: Any, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"{path} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path} must be >= {minimum}, got {value}")
    return value


def _number(path: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number, got {value!r}")
    return float(value)


def _boolean(path: str, value: Any) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path} must be true or false, got {value!r}")
    return value


def _optional_ids(path: str, value: Any) -> Optional[List[int]]:
    if value is None:
        return None
    if not isinstance(value, list):
        raise ConfigError(f"{path} must be a list of case ids or null, got {value!r}")
    return [_integer(f"{path}[{i}]", v, minimum=0) for i, v in enumerate(value)]


@dataclass
class ScheduleConfig:
    family: str = "linear"
    num_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def __post_init__(self):
        self.num_steps = _integer("schedule.num_steps", self.num_steps, minimum=1)
        self.beta_start = _number("schedule.beta_start", self.beta_start)
        self.beta_end = _number("schedule.beta_end", self.beta_end)
        self.build()

    def build(self) -> NoiseSchedule:
        try:
            return make_schedule(self.family, self.num_steps, self.beta_start, self.beta_end)
        except ConfigError as e:
            raise ConfigError(f"schedule: {e}") from e


@dataclass
class TrainConfig:
    iterations: int = 10000
    batch_size: int = 32
    learning_rate: float = 2e-4
    optimizer: str = "adam"
    weight_decay: float = 0.0
    ema_decay: Optional[float] = None
    checkpoint_every: int = 1000
    log_every: int = 100
    resume_from: Optional[str] = None

    def __post_init__(self):
        self.iterations = _integer("training.iterations", self.iterations, minimum=1)
        self.batch_size = _integer("training.batch_size", self.batch_size, minimum=1)
        self.learning_rate = _number("training.learning_rate", self.learning_rate)
        if self.learning_rate <= 0:
            raise ConfigError(f"training.learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"training.optimizer must be one of {list(OPTIMIZERS)}, got {self.optimizer!r}")
        self.weight_decay = _number("training.weight_decay", self.weight_decay)
        if self.ema_decay is not None:
            self.ema_decay = _number("training.ema_decay", self.ema_decay)
            if not 0.0 < self.ema_decay < 1.0:
                raise ConfigError(f"training.ema_decay must lie in (0, 1), got {self.ema_decay}")
        self.checkpoint_every = _integer("training.checkpoint_every", self.checkpoint_every, minimum=1)
        self.log_every = _integer("training.log_every", self.log_every, minimum=1)


@dataclass
class SamplerConfig:
    kind: str = "ddim"
    stride: int = 20
    sigma: str = "deterministic"
    eta: float = 1.0

    def __post_init__(self):
        try:
            self.kind = SamplerKind(self.kind).value
        except ValueError:
            raise ConfigError(f"sampler.kind must be one of {[k.value for k in SamplerKind]}, got {self.kind!r}")
        try:
            self.sigma = SigmaMode(self.sigma).value
        except ValueError:
            raise ConfigError(f"sampler.sigma must be one of {[m.value for m in SigmaMode]}, got {self.sigma!r}")
        self.stride = _integer("sampler.stride", self.stride, minimum=1)
        self.eta = _number("sampler.eta", self.eta)
        # beyond 1, sigma^2 can exceed 1 - alpha_prev on some DDIM step
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"sampler.eta must lie in [0, 1], got {self.eta}")

    def sigma_rule(self) -> SigmaRule:
        if self.sigma == SigmaMode.DDPM_EQUIVALENT.value:
            return SigmaRule.ddpm_equivalent()
        if self.sigma == SigmaMode.ETA.value:
            return SigmaRule.with_eta(self.eta)
        return SigmaRule.deterministic()

    def plan(self, num_steps: int, kind: Optional[str] = None) -> SamplerPlan:
        """Sampler plan for a schedule of num_steps steps."""
        kind = SamplerKind(kind or self.kind)
        try:
            if kind == SamplerKind.DDPM_FULL:
                return SamplerPlan.ddpm_full(num_steps)
            return SamplerPlan.ddim(num_steps, self.stride, self.sigma_rule())
        except ConfigError as e:
            raise ConfigError(f"sampler: {e}") from e


@dataclass
class DataConfig:
    root: Optional[str] = None
    workers: int = 4

    def __post_init__(self):
        self.workers = _integer("data.workers", self.workers, minimum=1)


@dataclass
class EvaluationConfig:
    ensemble_size: int = 20
    subset: str = "Test"
    case_ids: Optional[List[int]] = None
    shared_noise: bool = False
    dump_fields: bool = False
    use_ema: bool = False

    def __post_init__(self):
        self.ensemble_size = _integer("evaluation.ensemble_size", self.ensemble_size, minimum=1)
        if self.subset not in EVALUATION_SUBSETS:
            raise ConfigError(f"evaluation.subset must be one of {list(EVALUATION_SUBSETS)}, got {self.subset!r}")
        self.case_ids = _optional_ids("evaluation.case_ids", self.case_ids)
        self.shared_noise = _boolean("evaluation.shared_noise", self.shared_noise)
        self.dump_fields = _boolean("evaluation.dump_fields", self.dump_fields)
        self.use_ema = _boolean("evaluation.use_ema", self.use_ema)


@dataclass
class SampleConfig:
    reynolds: float = 7.5e6
    alpha_deg: float = 20.0
    re_max: Optional[float] = None
    mask_from: Optional[str] = None
    radius: float = 0.25
    count: int = 20

    def __post_init__(self):
        self.reynolds = _number("sample.reynolds", self.reynolds)
        if self.reynolds <= 0:
            raise ConfigError(f"sample.reynolds must be > 0, got {self.reynolds}")
        self.alpha_deg = _number("sample.alpha_deg", self.alpha_deg)
        if self.re_max is not None:
            self.re_max = _number("sample.re_max", self.re_max)
            if self.re_max < self.reynolds:
                raise ConfigError(f"sample.re_max {self.re_max} must be >= sample.reynolds {self.reynolds}")
        self.radius = _number("sample.radius", self.radius)
        if not 0 < self.radius < 1:
            raise ConfigError(f"sample.radius must lie in (0, 1), got {self.radius}")
        self.count = _integer("sample.count", self.count, minimum=1)


@dataclass
class AblationConfig:
    case_ids: List[int] = field(default_factory=lambda: [7])
    variants: List[str] = field(default_factory=lambda: ["dit", "unet_mid", "none_skipless_dit", "ddpm_full"])

    def __post_init__(self):
        self.case_ids = _optional_ids("ablation.case_ids", self.case_ids)
        if not self.case_ids:
            raise ConfigError("ablation.case_ids must name at least one case")
        if not isinstance(self.variants, list) or not self.variants:
            raise ConfigError(f"ablation.variants must be a non-empty list, got {self.variants!r}")
        unknown = [v for v in self.variants if v not in ABLATION_VARIANTS]
        if unknown:
            raise ConfigError(f"ablation.variants: unknown {unknown}; choose from {list(ABLATION_VARIANTS)}")
        if len(set(self.variants)) != len(self.variants):
            raise ConfigError(f"ablation.variants lists a variant twice: {self.variants}")


@dataclass
class SyntheticConfig:
    grid: int = 16
    replicates: int = 20
    noise_scale: float = 0.05
    alpha_deg: float = 20.0
    case_ids: Optional[List[int]] = None
    radius: float = 0.25
    circulation: bool = True

    def __post_init__(self):
        self.grid = _integer("synthetic.grid", self.grid, minimum=2)
        self.replicates = _integer("synthetic.replicates", self.replicates, minimum=1)
        self.noise_scale = _number("synthetic.noise_scale", self.noise_scale)
        if self.noise_scale < 0:
            raise ConfigError(f"synthetic.noise_scale must be >= 0, got {self.noise_scale}")
        self.alpha_deg = _number("synthetic.alpha_deg", self.alpha_deg)
        self.case_ids = _optional_ids("synthetic.case_ids", self.case_ids)
        self.radius = _number("synthetic.radius", self.radius)
        if not 0 < self.radius < 1:
            raise ConfigError(f"synthetic.radius must lie in (0, 1), got {self.radius}")
        self.circulation = _boolean("synthetic.circulation", self.circulation)


@dataclass
class RunConfig:
    """Fully validated run configuration."""

    seed: int
    device: str
    schedule: ScheduleConfig
    backbone: DenoiserConfig
    training: TrainConfig
    sampler: SamplerConfig
    data: DataConfig
    evaluation: EvaluationConfig
    sample: SampleConfig
    ablation: AblationConfig
    synthetic: SyntheticConfig
    tree: Dict[str, Any] = field(repr=False, default_factory=dict)

    @property
    def config_hash(self) -> str:
        return ConfigManager.config_hash(self.tree)

    def noise_schedule(self) -> NoiseSchedule:
        return self.schedule.build()

    def sampler_plan(self, kind: Optional[str] = None) -> SamplerPlan:
        return self.sampler.plan(self.schedule.num_steps, kind=kind)


SECTIONS = {
    "schedule": ScheduleConfig,
    "training": TrainConfig,
    "sampler": SamplerConfig,
    "data": DataConfig,
    "evaluation": EvaluationConfig,
    "sample": SampleConfig,
    "ablation": AblationConfig,
    "synthetic": SyntheticConfig,
}


class ConfigManager:
    """Merges config files and overrides onto the defaults and validates the result."""

    def __init__(self):
        self.tree = RunDefaults.tree()
        self.sources: List[str] = []
        self._seed_override: Optional[Any] = None

    @staticmethod
    def config_hash(tree: Dict[str, Any]) -> str:
        """First 10 hex digits of the SHA-256 of the canonical JSON."""
        canonical = json.dumps(tree, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:10]

    def _merge(self, base: Dict[str, Any], update: Dict[str, Any], prefix: str = ""):
        for key, value in update.items():
            path = f"{prefix}{key}"
            if key not in base:
                raise ConfigError(f"Unknown config key: {path}")
            if isinstance(base[key], dict):
                if not isinstance(value, dict):
                    raise ConfigError(f"{path} must be a mapping, got {value!r}")
                self._merge(base[key], value, prefix=f"{path}.")
            else:
                base[key] = copy.deepcopy(value)

    def load(self, path: Union[str, Path]) -> "ConfigManager":
        """Merge a JSON config file onto the current tree."""
        path = Path(path)
        try:
            with open(path, "r") as f:
                update = json.load(f)
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
        if not isinstance(update, dict):
            raise ConfigError(f"Config {path} must hold a JSON object")
        self._merge(self.tree, update)
        self.sources.append(str(path))
        logger.debug("Merged config file %s", path)
        return self

    @staticmethod
    def parse_value(text: str) -> Any:
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            return text

    def apply_overrides(self, overrides: Sequence[str]) -> "ConfigManager":
        """Apply ``dotted.path=value`` overrides in order."""
        for override in overrides or []:
            if "=" not in override:
                raise ConfigError(f"Override {override!r} is not of the form path=value")
            path, text = override.split("=", 1)
            path = path.strip()
            keys = path.split(".")
            node = self.tree
            for depth, key in enumerate(keys[:-1]):
                child = node.get(key) if isinstance(node, dict) else None
                if not isinstance(child, dict):
                    raise ConfigError(f"Unknown config key: {'.'.join(keys[:depth + 1])}")
                node = child
            leaf = keys[-1]
            if leaf not in node:
                raise ConfigError(f"Unknown config key: {path}")
            if isinstance(node[leaf], dict):
                raise ConfigError(f"{path} is a section; override one of its fields instead")
            value = self.parse_value(text)
            node[leaf] = value
            if path == "seed":
                self._seed_override = value
            self.sources.append(f"--set {path}")
        return self

    def apply_seed(self, seed: Optional[int]) -> "ConfigManager":
        """Apply ``--seed``, rejecting a conflicting ``--set seed=``."""
        if seed is None:
            return self
        if self._seed_override is not None and self._seed_override != seed:
            raise ConfigError(f"seed: --seed {seed} conflicts with --set seed={self._seed_override}")
        self.tree["seed"] = seed
        return self

    def resolved(self) -> Dict[str, Any]:
        return copy.deepcopy(self.tree)

    def build(self) -> RunConfig:
        """Validate the whole tree into a RunConfig."""
        tree = self.resolved()
        seed = _integer("seed", tree["seed"], minimum=0)
        if not isinstance(tree["device"], str) or not tree["device"]:
            raise ConfigError(f"device must be a non-empty string, got {tree['device']!r}")
        sections = {}
        for name, cls in SECTIONS.items():
            try:
                sections[name] = cls(**tree[name])
            except TypeError as e:
                raise ConfigError(f"{name}: {e}") from e
        try:
            backbone = DenoiserConfig.from_dict(tree["backbone"])
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"backbone: {e}") from e
        sections["sampler"].plan(sections["schedule"].num_steps)
        return RunConfig(seed=seed, device=tree["device"], backbone=backbone, tree=tree, **sections)


def load_run_config(config_path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = (),
                    seed: Optional[int] = None) -> RunConfig:
    """Defaults + optional file + overrides + seed, validated."""
    manager = ConfigManager()
    if config_path:
        manager.load(config_path)
    manager.apply_overrides(overrides)
    manager.apply_seed(seed)
    return manager.build()
