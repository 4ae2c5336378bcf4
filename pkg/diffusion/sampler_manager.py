import logging
import time
from typing import Any, Callable, Dict, Optional

import torch

from utils.errors import InferenceError
from .base_sampler import BaseSampler
from .samplers import DDIMSampler, DDPMSampler, SamplerKind, SamplerPlan
from .schedules import NoiseSchedule

logger = logging.getLogger(__name__)

NoisePredictor = Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]


class SamplerManager:
    """Builds samplers from plans and keeps a ledger of model evaluations."""

    def __init__(self, schedule: NoiseSchedule):
        self.schedule = schedule
        self.usage = self._empty_usage()

    @staticmethod
    def _empty_usage() -> Dict[str, Any]:
        return {
            "generate_calls": 0,
            "forward_passes": 0,
            "model_evaluations": 0,
            "samples": 0,
            "wall_seconds": 0.0,
        }

    def reset_usage(self):
        """Clear the evaluation ledger."""
        self.usage = self._empty_usage()

    def _update_usage(self, forward_passes: int, batch_size: int, elapsed: float):
        self.usage["generate_calls"] += 1
        self.usage["forward_passes"] += forward_passes
        self.usage["model_evaluations"] += forward_passes * batch_size
        self.usage["samples"] += batch_size
        self.usage["wall_seconds"] += elapsed

    def get_usage_info(self) -> Dict[str, Any]:
        """Ledger totals plus per-sample averages."""
        info = dict(self.usage)
        samples = max(self.usage["samples"], 1)
        info["evaluations_per_sample"] = self.usage["model_evaluations"] / samples
        info["seconds_per_sample"] = self.usage["wall_seconds"] / samples
        return info

    def get_sampler(self, plan: SamplerPlan) -> BaseSampler:
        """Sampler implementing the plan's kind."""
        plan.validate(self.schedule)
        if plan.kind == SamplerKind.DDPM_FULL:
            return DDPMSampler(self.schedule, plan)
        if plan.kind == SamplerKind.DDIM:
            return DDIMSampler(self.schedule, plan)
        raise InferenceError(f"Unsupported sampler kind: {plan.kind}")

    def generate(self, model: NoisePredictor, condition: torch.Tensor, plan: SamplerPlan,
                 generator: torch.Generator = None, x_T: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Walk the plan from pure noise down to a predicted clean field."""
        if condition.ndim != 4 or condition.shape[1] != 3:
            raise InferenceError(f"Condition must be (B, 3, H, W), got {tuple(condition.shape)}")
        shape = (condition.shape[0], 3, condition.shape[2], condition.shape[3])
        if x_T is None:
            x = torch.randn(shape, generator=generator, dtype=condition.dtype, device=condition.device)
        elif tuple(x_T.shape) != shape:
            raise InferenceError(f"x_T shape {tuple(x_T.shape)} does not match {shape}")
        else:
            x = x_T.to(dtype=condition.dtype, device=condition.device)

        sampler = self.get_sampler(plan)
        pairs = sampler.trajectory()
        start = time.perf_counter()
        with torch.no_grad():
            for t_cur, t_prev in pairs:
                t_batch = torch.full((shape[0],), t_cur, dtype=torch.long, device=condition.device)
                eps_hat = model(x, condition, t_batch)
                if eps_hat.shape != x.shape:
                    raise InferenceError(
                        f"Model returned {tuple(eps_hat.shape)} for a field of shape {tuple(x.shape)}"
                    )
                x = sampler.step(x, eps_hat, t_cur, t_prev, generator)
        elapsed = time.perf_counter() - start
        self._update_usage(len(pairs), shape[0], elapsed)
        logger.debug("%s generated %d fields in %.3fs", sampler.describe(), shape[0], elapsed)
        return x


def generate(model: NoisePredictor, condition: torch.Tensor, plan: SamplerPlan, schedule: NoiseSchedule,
             generator: torch.Generator = None, x_T: Optional[torch.Tensor] = None) -> torch.Tensor:
    """One-shot generation without keeping a ledger."""
    return SamplerManager(schedule).generate(model, condition, plan, generator, x_T=x_T)
