"""
Diffusion Trainer
This module trains a noise predictor with the conditional epsilon objective:
draw a training field, a timestep t ~ U{1..T} and Gaussian noise, and
regress the injected noise from the noised field, its condition and t.
"""

import copy
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch
import torch.nn as nn

from data.field_sample import Dataset, FieldSample, Subset
from diffusion.forward_process import noise_generator, q_sample
from diffusion.schedules import NoiseSchedule
from models.checkpoint import load_checkpoint, load_training_state, save_checkpoint
from models.config import DenoiserConfig
from models.denoiser import build_denoiser
from utils.errors import ConfigError, DataError, NumericalError

logger = logging.getLogger(__name__)

LOSS_LOG_COLUMNS = ["iteration", "loss", "wall_seconds"]


@dataclass
class StepResult:
    loss: float
    t: torch.Tensor


@dataclass
class TrainResult:
    model: nn.Module
    checkpoints: List[Path]
    loss_log: Path
    losses: List[float] = field(default_factory=list)
    ema_model: Optional[nn.Module] = None

    @property
    def latest_checkpoint(self) -> Optional[Path]:
        return self.checkpoints[-1] if self.checkpoints else None


def stack_samples(samples: Sequence[FieldSample]):
    """(N, 3, H, W) condition and target tensors."""
    if not samples:
        raise DataError("No samples to stack")
    conditions = torch.from_numpy(np.stack([s.condition for s in samples]).astype(np.float32))
    targets = torch.from_numpy(np.stack([s.target for s in samples]).astype(np.float32))
    return conditions, targets


def sample_timesteps(batch_size: int, num_steps: int, generator: Optional[torch.Generator] = None,
                     device: str = "cpu") -> torch.Tensor:
    """t ~ U{1..T} per batch element."""
    return torch.randint(1, num_steps + 1, (batch_size,), generator=generator, device=device)


def train_step(model: nn.Module, optimizer: Optional[torch.optim.Optimizer], x0: torch.Tensor,
               condition: torch.Tensor, schedule: NoiseSchedule, generator: Optional[torch.Generator] = None,
               iteration: Optional[int] = None) -> StepResult:
    """One optimizer update on the epsilon objective; returns the batch loss."""
    if x0.shape[0] == 0:
        raise DataError("train_step received an empty batch")
    t = sample_timesteps(x0.shape[0], schedule.num_steps, generator, device=x0.device)
    pair = q_sample(x0, t, schedule, generator)
    eps_hat = model(pair.x_t, condition, t)
    per_element = ((eps_hat - pair.epsilon) ** 2).flatten(1).mean(dim=1)
    loss = per_element.mean()
    if not torch.isfinite(loss):
        raise NumericalError(
            f"Non-finite loss at iteration {iteration}",
            snapshot={
                "iteration": iteration,
                "t": t.tolist(),
                "loss_per_element": per_element.detach().cpu().tolist(),
            },
        )
    if optimizer is not None:
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
    return StepResult(loss=float(loss.detach()), t=t)


def build_optimizer(model: nn.Module, kind: str, learning_rate: float, weight_decay: float = 0.0):
    if kind == "adam":
        return torch.optim.Adam(model.parameters(), lr=learning_rate, weight_decay=weight_decay)
    if kind == "adamw":
        return torch.optim.AdamW(model.parameters(), lr=learning_rate, weight_decay=weight_decay)
    raise ConfigError(f"training.optimizer: unsupported optimizer {kind!r}")


class DiffusionTrainer:
    """Runs the training loop, keeping the loss log, EMA weights and checkpoint series."""

    def __init__(self, model_config: DenoiserConfig, schedule: NoiseSchedule, train_config, seed: int = 0,
                 device: str = "cpu"):
        self.model_config = model_config
        self.schedule = schedule
        self.config = train_config
        self.seed = int(seed)
        self.device = device
        self.model = build_denoiser(model_config, seed=self.seed).to(device)
        self.optimizer = build_optimizer(self.model, train_config.optimizer, train_config.learning_rate,
                                         train_config.weight_decay)
        self.ema_model = None
        if train_config.ema_decay is not None:
            self.ema_model = copy.deepcopy(self.model)
            self.ema_model.requires_grad_(False)
        self.iteration = 0
        self.loss_rows: List[Dict[str, Any]] = []

    def check_dataset(self, samples: Sequence[FieldSample]):
        """Reject training data the model cannot consume, before the first step."""
        if not samples:
            raise DataError("The dataset has no training samples")
        size = self.model_config.image_size
        for sample in samples:
            if tuple(sample.shape) != (size, size):
                raise ConfigError(
                    f"backbone.image_size is {size} but case {sample.meta.case_id} is on a "
                    f"{sample.shape[0]}x{sample.shape[1]} grid"
                )

    def resume(self, checkpoint: Union[str, Path]):
        """Restore weights, optimizer state and iteration from a checkpoint."""
        restored = load_checkpoint(checkpoint, device=self.device)
        if restored.config.to_dict() != self.model_config.to_dict():
            raise ConfigError(f"training.resume_from: {checkpoint} was trained with a different backbone")
        self.model.load_state_dict(restored.state_dict())
        state = load_training_state(checkpoint)
        self.optimizer.load_state_dict(state["optimizer"])
        self.iteration = int(state.get("iteration") or 0)
        if self.ema_model is not None:
            self.ema_model.load_state_dict(load_checkpoint(checkpoint, device=self.device,
                                                           prefer_ema=True).state_dict())
        logger.info("Resumed from %s at iteration %d", checkpoint, self.iteration)

    @torch.no_grad()
    def update_ema(self):
        decay = self.config.ema_decay
        for ema_param, param in zip(self.ema_model.parameters(), self.model.parameters()):
            ema_param.mul_(decay).add_(param.detach(), alpha=1.0 - decay)

    def save(self, checkpoint_dir: Path) -> Path:
        path = Path(checkpoint_dir) / f"ckpt_{self.iteration:07d}.fdc"
        return save_checkpoint(path, self.model, self.optimizer, iteration=self.iteration, ema_model=self.ema_model)

    def write_loss_log(self, path: Path) -> Path:
        pd.DataFrame(self.loss_rows, columns=LOSS_LOG_COLUMNS).to_csv(path, index=False)
        return path

    def train(self, dataset: Dataset, out_dir: Union[str, Path]) -> TrainResult:
        """Train for the configured iterations, writing checkpoints and the loss log under out_dir."""
        out_dir = Path(out_dir)
        samples = dataset.for_subset(Subset.TRAINING)
        self.check_dataset(samples)
        conditions, targets = stack_samples(samples)
        conditions, targets = conditions.to(self.device), targets.to(self.device)
        checkpoint_dir = out_dir / "checkpoints"
        loss_log = out_dir / "loss_log.csv"
        checkpoints: List[Path] = []
        losses: List[float] = []
        cfg = self.config

        logger.info("Training on %d samples for %d iterations (batch %d)", len(samples), cfg.iterations,
                    cfg.batch_size)
        self.model.train()
        start = time.perf_counter()
        while self.iteration < cfg.iterations:
            iteration = self.iteration + 1
            generator = noise_generator(self.seed, iteration, device=self.device)
            index = torch.randint(0, len(samples), (cfg.batch_size,), generator=generator, device=self.device)
            try:
                result = train_step(self.model, self.optimizer, targets[index], conditions[index], self.schedule,
                                    generator, iteration=iteration)
            except NumericalError:
                checkpoints.append(self.save(checkpoint_dir))
                self.write_loss_log(loss_log)
                logger.error("Non-finite loss at iteration %d; last good state saved to %s", iteration,
                             checkpoints[-1])
                raise
            self.iteration = iteration
            if self.ema_model is not None:
                self.update_ema()
            elapsed = time.perf_counter() - start
            losses.append(result.loss)
            self.loss_rows.append({"iteration": iteration, "loss": result.loss, "wall_seconds": elapsed})
            if iteration % cfg.log_every == 0:
                logger.info("iteration %d loss %.6f (%.1fs)", iteration, result.loss, elapsed)
            if iteration % cfg.checkpoint_every == 0 or iteration == cfg.iterations:
                checkpoints.append(self.save(checkpoint_dir))
                self.write_loss_log(loss_log)

        self.write_loss_log(loss_log)
        return TrainResult(model=self.model, checkpoints=checkpoints, loss_log=loss_log, losses=losses,
                           ema_model=self.ema_model)


def train(run_config, dataset: Dataset, out_dir: Union[str, Path]) -> TrainResult:
    """Train the configured backbone on a dataset's training cases."""
    trainer = DiffusionTrainer(run_config.backbone, run_config.noise_schedule(), run_config.training,
                               seed=run_config.seed, device=run_config.device)
    if run_config.training.resume_from:
        trainer.resume(run_config.training.resume_from)
    return trainer.train(dataset, out_dir)
