"""
Noise Schedules
Beta sequences with their per-step and cumulative alpha products.

Timesteps are 1-based everywhere in foildiff (x_1 ... x_T). Storage is
0-based, and the only place that maps one to the other is
``NoiseSchedule.index``. Timestep 0 denotes the clean data, whose
cumulative alpha is 1.
"""

from dataclasses import dataclass, field
from typing import Dict, Any

import numpy as np

from utils.errors import ScheduleError, TimestepError


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Immutable diffusion schedule stored in 64-bit reals."""

    num_steps: int
    betas: np.ndarray
    alphas: np.ndarray = field(init=False, repr=False)
    alphas_cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) != self.num_steps:
            raise ScheduleError(f"Expected {self.num_steps} betas, got shape {betas.shape}")
        if not np.all((betas > 0.0) & (betas < 1.0)):
            raise ScheduleError("Every beta must lie in (0, 1)")
        if np.any(np.diff(betas) <= 0.0):
            raise ScheduleError("Betas must be strictly increasing")

        alphas = 1.0 - betas
        alphas_cum = np.cumprod(alphas)
        for name, value in (("betas", betas), ("alphas", alphas), ("alphas_cum", alphas_cum)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def index(self, t: int) -> int:
        """Map a 1-based timestep to its storage index."""
        if not 1 <= int(t) <= self.num_steps:
            raise TimestepError(f"Timestep {t} outside 1..{self.num_steps}")
        return int(t) - 1

    def beta_at(self, t: int) -> float:
        return float(self.betas[self.index(t)])

    def alpha_cum_at(self, t: int) -> float:
        return float(self.alphas_cum[self.index(t)])

    def alpha_cum_or_one(self, t: int) -> float:
        """Cumulative alpha with the clean-data convention alpha_0 = 1."""
        if int(t) == 0:
            return 1.0
        return self.alpha_cum_at(t)

    def alphas_cum_for(self, t: np.ndarray) -> np.ndarray:
        """Vectorised lookup for an array of 1-based timesteps."""
        t = np.asarray(t, dtype=np.int64)
        if t.size and (t.min() < 1 or t.max() > self.num_steps):
            raise TimestepError(f"Timesteps outside 1..{self.num_steps}: [{t.min()}, {t.max()}]")
        return self.alphas_cum[t - 1]

    def summary(self) -> Dict[str, Any]:
        return {
            "num_steps": self.num_steps,
            "beta_first": float(self.betas[0]),
            "beta_last": float(self.betas[-1]),
            "alpha_cum_last": float(self.alphas_cum[-1]),
        }


def make_linear_schedule(num_steps: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linearly spaced betas from beta_start to beta_end inclusive."""
    if int(num_steps) < 1:
        raise ScheduleError(f"num_steps must be >= 1, got {num_steps}")
    if not 0.0 < beta_start < beta_end < 1.0:
        raise ScheduleError(
            f"Schedule endpoints must satisfy 0 < beta_start < beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, int(num_steps), dtype=np.float64)
    return NoiseSchedule(num_steps=int(num_steps), betas=betas)


def alpha_cum_at(schedule: NoiseSchedule, t: int) -> float:
    """Cumulative alpha at 1-based timestep t."""
    return schedule.alpha_cum_at(t)


def make_schedule(family: str, num_steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Build a schedule from run-configuration fields."""
    if family != "linear":
        raise ScheduleError(f"Unsupported schedule family: {family}")
    return make_linear_schedule(num_steps, beta_start, beta_end)
