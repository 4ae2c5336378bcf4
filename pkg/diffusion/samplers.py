"""
Reverse-Process Samplers
Ancestral DDPM steps, generalized DDIM steps over the sigma family and the
strided timestep subset 1, 1+n, 1+2n, ..., 1+kn.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

import numpy as np
import torch

from utils.errors import InferenceError, PlanError
from .base_sampler import BaseSampler
from .schedules import NoiseSchedule


class SamplerKind(str, Enum):
    DDPM_FULL = "ddpm_full"
    DDIM = "ddim"


class SigmaMode(str, Enum):
    DDPM_EQUIVALENT = "ddpm_equivalent"
    DETERMINISTIC_ZERO = "deterministic"
    ETA = "eta"


@dataclass(frozen=True)
class SigmaRule:
    """How the per-step noise scale sigma_t is chosen."""

    mode: SigmaMode
    eta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", SigmaMode(self.mode))
        if self.eta < 0.0:
            raise PlanError(f"eta must be >= 0, got {self.eta}")

    @classmethod
    def ddpm_equivalent(cls) -> "SigmaRule":
        return cls(SigmaMode.DDPM_EQUIVALENT)

    @classmethod
    def deterministic(cls) -> "SigmaRule":
        return cls(SigmaMode.DETERMINISTIC_ZERO, eta=0.0)

    @classmethod
    def with_eta(cls, eta: float) -> "SigmaRule":
        return cls(SigmaMode.ETA, eta=float(eta))

    @property
    def is_stochastic(self) -> bool:
        if self.mode == SigmaMode.DETERMINISTIC_ZERO:
            return False
        return self.mode == SigmaMode.DDPM_EQUIVALENT or self.eta > 0.0

    def __str__(self) -> str:
        if self.mode == SigmaMode.ETA:
            return f"eta={self.eta:g}"
        return self.mode.value


@dataclass(frozen=True)
class SamplerPlan:
    """Timestep subset plus sigma rule defining one sampling trajectory."""

    kind: SamplerKind
    timesteps: Tuple[int, ...]
    sigma_rule: SigmaRule

    def __post_init__(self):
        object.__setattr__(self, "kind", SamplerKind(self.kind))
        steps = tuple(int(t) for t in self.timesteps)
        object.__setattr__(self, "timesteps", steps)
        if not steps:
            raise PlanError("A sampler plan needs at least one timestep")
        if steps[0] < 1:
            raise PlanError(f"First timestep must be >= 1, got {steps[0]}")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise PlanError("Plan timesteps must be strictly increasing")
        if self.kind == SamplerKind.DDPM_FULL:
            if steps != tuple(range(1, len(steps) + 1)):
                raise PlanError("A full DDPM plan must visit every timestep 1..T")
            if self.sigma_rule.mode != SigmaMode.DDPM_EQUIVALENT:
                raise PlanError("A full DDPM plan uses the DDPM-equivalent sigma rule")

    @classmethod
    def ddpm_full(cls, num_steps: int) -> "SamplerPlan":
        return cls(SamplerKind.DDPM_FULL, tuple(range(1, int(num_steps) + 1)), SigmaRule.ddpm_equivalent())

    @classmethod
    def ddim(cls, num_steps: int, stride: int, sigma_rule: SigmaRule = None) -> "SamplerPlan":
        return cls(SamplerKind.DDIM, strided_subset(num_steps, stride), sigma_rule or SigmaRule.deterministic())

    def validate(self, schedule: NoiseSchedule) -> None:
        """Check the plan against a schedule horizon."""
        if self.timesteps[-1] > schedule.num_steps:
            raise PlanError(f"Plan reaches timestep {self.timesteps[-1]} beyond T={schedule.num_steps}")
        if self.kind == SamplerKind.DDPM_FULL and len(self.timesteps) != schedule.num_steps:
            raise PlanError(f"Full DDPM plan has {len(self.timesteps)} steps, schedule has {schedule.num_steps}")

    def pairs(self) -> List[Tuple[int, int]]:
        """Descending (t_cur, t_prev) pairs; the last pair closes at t_prev = 0."""
        descending = list(reversed(self.timesteps))
        return list(zip(descending, descending[1:] + [0]))

    def __len__(self) -> int:
        return len(self.timesteps)


def strided_subset(num_steps: int, stride: int) -> Tuple[int, ...]:
    """(1, 1+n, 1+2n, ..., 1+kn) with k maximal such that 1+kn <= T."""
    if not 1 <= int(stride) <= int(num_steps):
        raise PlanError(f"Stride must satisfy 1 <= n <= T={num_steps}, got {stride}")
    return tuple(range(1, int(num_steps) + 1, int(stride)))


def ddim_sigma(alpha_prev: float, alpha_cur: float, rule: SigmaRule) -> float:
    """Noise scale for a DDIM step from alpha_cur to alpha_prev."""
    if not 0.0 < alpha_cur < 1.0 or not 0.0 < alpha_prev <= 1.0:
        raise PlanError(f"Cumulative alphas out of range: prev={alpha_prev}, cur={alpha_cur}")
    if alpha_cur > alpha_prev:
        raise PlanError(f"alpha_prev ({alpha_prev}) must not be below alpha_cur ({alpha_cur})")
    if rule.mode == SigmaMode.DETERMINISTIC_ZERO:
        return 0.0
    ddpm_sigma = math.sqrt((1.0 - alpha_prev) / (1.0 - alpha_cur)) * math.sqrt(1.0 - alpha_cur / alpha_prev)
    if rule.mode == SigmaMode.ETA:
        return rule.eta * ddpm_sigma
    return ddpm_sigma


def ddim_moments(x_t: torch.Tensor, eps_hat: torch.Tensor, alpha_prev: float, alpha_cur: float,
                 sigma: float) -> Tuple[torch.Tensor, float]:
    """Mean and noise scale of the DDIM transition, without drawing noise."""
    direction = 1.0 - alpha_prev - sigma ** 2
    if direction < -1e-12:
        raise PlanError(f"sigma={sigma:g} too large for this step (1 - alpha_prev - sigma^2 = {direction:g})")
    x0_hat = (x_t - math.sqrt(1.0 - alpha_cur) * eps_hat) / math.sqrt(alpha_cur)
    mean = math.sqrt(alpha_prev) * x0_hat + math.sqrt(max(direction, 0.0)) * eps_hat
    return mean, sigma


def ddpm_posterior_moments(x_t: torch.Tensor, eps_hat: torch.Tensor, beta: float, alpha_cur: float,
                           alpha_prev: float) -> Tuple[torch.Tensor, float]:
    """Posterior mean and standard deviation of q(x_{t-1} | x_t, x_0 = x0_hat)."""
    mean = (x_t - (beta / math.sqrt(1.0 - alpha_cur)) * eps_hat) / math.sqrt(1.0 - beta)
    variance = beta * (1.0 - alpha_prev) / (1.0 - alpha_cur)
    return mean, math.sqrt(max(variance, 0.0))


def posterior_sigma(schedule: NoiseSchedule, t: int) -> float:
    """Standard deviation of the ancestral step at timestep t (0 at t = 1)."""
    beta = schedule.beta_at(t)
    alpha_cur = schedule.alpha_cum_at(t)
    alpha_prev = schedule.alpha_cum_or_one(t - 1)
    return float(np.sqrt(beta * (1.0 - alpha_prev) / (1.0 - alpha_cur)))


def _check_shapes(x_t: torch.Tensor, eps_hat: torch.Tensor):
    if x_t.shape != eps_hat.shape:
        raise InferenceError(f"eps_hat shape {tuple(eps_hat.shape)} does not match x_t shape {tuple(x_t.shape)}")


def ddim_step(x_t: torch.Tensor, eps_hat: torch.Tensor, t_cur: int, t_prev: int, sigma: float,
              schedule: NoiseSchedule, generator: torch.Generator = None) -> torch.Tensor:
    """sqrt(a_prev) x0_hat + sqrt(1 - a_prev - sigma^2) eps_hat + sigma * eps_new."""
    if not 0 <= t_prev < t_cur:
        raise PlanError(f"DDIM step needs 0 <= t_prev < t_cur, got t_prev={t_prev}, t_cur={t_cur}")
    _check_shapes(x_t, eps_hat)
    alpha_cur = schedule.alpha_cum_at(t_cur)
    alpha_prev = schedule.alpha_cum_or_one(t_prev)
    mean, sigma = ddim_moments(x_t, eps_hat, alpha_prev, alpha_cur, sigma)
    if sigma == 0.0:
        return mean
    noise = torch.randn(x_t.shape, generator=generator, dtype=x_t.dtype, device=x_t.device)
    return mean + sigma * noise


def ddpm_ancestral_step(x_t: torch.Tensor, eps_hat: torch.Tensor, t: int, schedule: NoiseSchedule,
                        generator: torch.Generator = None) -> torch.Tensor:
    """Ancestral step x_t -> x_{t-1}; no noise is added on the final step t = 1."""
    _check_shapes(x_t, eps_hat)
    mean, sigma = ddpm_posterior_moments(
        x_t, eps_hat,
        beta=schedule.beta_at(t),
        alpha_cur=schedule.alpha_cum_at(t),
        alpha_prev=schedule.alpha_cum_or_one(t - 1),
    )
    if t == 1 or sigma == 0.0:
        return mean
    noise = torch.randn(x_t.shape, generator=generator, dtype=x_t.dtype, device=x_t.device)
    return mean + sigma * noise


class DDPMSampler(BaseSampler):
    """Classical ancestral sampler visiting every timestep."""

    def __init__(self, schedule: NoiseSchedule, plan: SamplerPlan):
        super().__init__("DDPM", schedule, plan)

    def step(self, x_t, eps_hat, t_cur, t_prev, generator=None):
        if t_prev != t_cur - 1:
            raise PlanError(f"Ancestral sampling moves one step at a time, got {t_cur} -> {t_prev}")
        return ddpm_ancestral_step(x_t, eps_hat, t_cur, self.schedule, generator)


class DDIMSampler(BaseSampler):
    """Non-Markovian sampler over a timestep subset."""

    def __init__(self, schedule: NoiseSchedule, plan: SamplerPlan):
        super().__init__("DDIM", schedule, plan)

    def step(self, x_t, eps_hat, t_cur, t_prev, generator=None):
        sigma = ddim_sigma(
            self.schedule.alpha_cum_or_one(t_prev),
            self.schedule.alpha_cum_at(t_cur),
            self.plan.sigma_rule,
        )
        return ddim_step(x_t, eps_hat, t_cur, t_prev, sigma, self.schedule, generator)
