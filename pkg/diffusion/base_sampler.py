from abc import ABC, abstractmethod
from typing import List, Tuple

import torch

from .schedules import NoiseSchedule


class BaseSampler(ABC):
    """Base class for all reverse-process samplers."""

    def __init__(self, name: str, schedule: NoiseSchedule, plan):
        self.name = name
        self.schedule = schedule
        self.plan = plan

    @abstractmethod
    def step(self, x_t: torch.Tensor, eps_hat: torch.Tensor, t_cur: int, t_prev: int,
             generator: torch.Generator = None) -> torch.Tensor:
        """Move x from timestep t_cur to t_prev given the predicted noise."""
        pass

    def trajectory(self) -> List[Tuple[int, int]]:
        """(t_cur, t_prev) pairs in the order they are visited."""
        return self.plan.pairs()

    def describe(self) -> str:
        return f"{self.name}: {len(self.plan.timesteps)} steps, sigma {self.plan.sigma_rule}"
