"""
Forward Diffusion
Closed-form noising q(x_t | x_0), the single-step transition and the
x_0 reconstruction implied by an epsilon prediction.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import torch

from utils.errors import DataError, InferenceError
from .schedules import NoiseSchedule

Timestep = Union[int, torch.Tensor]


@dataclass(frozen=True)
class NoisedPair:
    """A noised target together with the exact noise that produced it."""

    x_t: torch.Tensor
    epsilon: torch.Tensor
    t: Timestep


def noise_generator(seed: int, *keys: int, device: str = "cpu") -> torch.Generator:
    """Independent random stream derived from (seed, keys...)."""
    state = np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(2, dtype=np.uint32)
    generator = torch.Generator(device=device)
    generator.manual_seed(int(state[0]) << 32 | int(state[1]))
    return generator


def _signal_noise_scales(schedule: NoiseSchedule, t: Timestep, like: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """sqrt(alpha_t) and sqrt(1 - alpha_t), shaped to broadcast against ``like``."""
    if isinstance(t, torch.Tensor) and t.ndim > 0:
        alphas_cum = schedule.alphas_cum_for(t.detach().cpu().numpy())
        shape = (-1,) + (1,) * (like.ndim - 1)
    else:
        alphas_cum = np.float64(schedule.alpha_cum_at(int(t)))
        shape = ()
    signal = torch.as_tensor(np.sqrt(alphas_cum), dtype=like.dtype, device=like.device).reshape(shape)
    noise = torch.as_tensor(np.sqrt(1.0 - alphas_cum), dtype=like.dtype, device=like.device).reshape(shape)
    return signal, noise


def q_sample(x0: torch.Tensor, t: Timestep, schedule: NoiseSchedule,
             generator: torch.Generator = None) -> NoisedPair:
    """Draw x_t = sqrt(alpha_t) x_0 + sqrt(1 - alpha_t) eps with eps ~ N(0, I)."""
    if not torch.isfinite(x0).all():
        raise DataError("q_sample received a non-finite x0")
    epsilon = torch.randn(x0.shape, generator=generator, dtype=x0.dtype, device=x0.device)
    signal, noise = _signal_noise_scales(schedule, t, x0)
    return NoisedPair(x_t=signal * x0 + noise * epsilon, epsilon=epsilon, t=t)


def q_step(x_prev: torch.Tensor, t: int, schedule: NoiseSchedule,
           generator: torch.Generator = None) -> torch.Tensor:
    """One Markov transition q(x_t | x_{t-1}) = N(sqrt(1 - beta_t) x_{t-1}, beta_t I)."""
    beta = schedule.beta_at(t)
    epsilon = torch.randn(x_prev.shape, generator=generator, dtype=x_prev.dtype, device=x_prev.device)
    return float(np.sqrt(1.0 - beta)) * x_prev + float(np.sqrt(beta)) * epsilon


def predict_x0_from_eps(x_t: torch.Tensor, eps_hat: torch.Tensor, t: Timestep,
                        schedule: NoiseSchedule) -> torch.Tensor:
    """Reconstruction x_0 = (x_t - sqrt(1 - alpha_t) eps) / sqrt(alpha_t)."""
    if x_t.shape != eps_hat.shape:
        raise InferenceError(f"x_t shape {tuple(x_t.shape)} does not match eps_hat shape {tuple(eps_hat.shape)}")
    signal, noise = _signal_noise_scales(schedule, t, x_t)
    return (x_t - noise * eps_hat) / signal
