"""
Denoiser Backbone
This module assembles the noise predictor eps_theta(x_t, c, t): the noisy
target and the condition channels enter the encoder together, the latent
network is modulated by the pooled condition plus the timestep embedding,
and the decoder projects back to the three target channels.
"""

import logging
from typing import Any, Dict, List, Optional, Tuple, Union

import torch
import torch.nn as nn

from utils.errors import ConfigError, InferenceError, NumericalError
from .config import DenoiserConfig, LatentKind
from .encoder_decoder import Decoder, Encoder
from .latent import build_latent
from .layers import ConditionEmbedder, TimestepEmbedder

logger = logging.getLogger(__name__)

CONDITION_CHANNELS = 3
TARGET_CHANNELS = 3


def _check_finite(stage: str, tensor: torch.Tensor):
    if not torch.isfinite(tensor).all():
        raise NumericalError(
            f"Non-finite activations in the {stage}",
            snapshot={"stage": stage, "shape": list(tensor.shape)},
        )


class DenoiserBackbone(nn.Module):
    """Hybrid convolutional / transformer noise predictor."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        if config.input_channels != TARGET_CHANNELS + CONDITION_CHANNELS:
            raise ConfigError(
                f"backbone.input_channels must be {TARGET_CHANNELS + CONDITION_CHANNELS}, got {config.input_channels}"
            )
        self.config = config
        self.time_embedder = TimestepEmbedder(config.embed_dim, config.time_embed_dim)
        if config.latent_kind.uses_transformer:
            self.cond_embedder = ConditionEmbedder(CONDITION_CHANNELS, config.embed_dim)
        else:
            self.cond_embedder = None
        self.encoder = Encoder(config)
        self.latent = build_latent(config)
        self.decoder = Decoder(config)
        self.initialize_weights()

    def initialize_weights(self):
        """Truncated-normal projections, then zeroed residual branches and gates."""
        def _basic_init(module):
            if isinstance(module, nn.Linear):
                nn.init.trunc_normal_(module.weight, std=0.02)
                if module.bias is not None:
                    nn.init.zeros_(module.bias)
        self.apply(_basic_init)

        out_conv = self.decoder.out[-1]
        nn.init.trunc_normal_(out_conv.weight, std=0.02)
        nn.init.zeros_(out_conv.bias)

        for module in self.modules():
            if hasattr(module, "zero_init_"):
                module.zero_init_()

    def embed_timestep(self, t: Union[int, torch.Tensor], batch_size: int, device) -> torch.Tensor:
        if not isinstance(t, torch.Tensor):
            t = torch.tensor([int(t)], device=device)
        t = t.reshape(-1).to(device)
        if t.numel() == 1 and batch_size > 1:
            t = t.expand(batch_size)
        if t.numel() != batch_size:
            raise InferenceError(f"Got {t.numel()} timesteps for a batch of {batch_size}")
        return self.time_embedder(t)

    def embed_condition(self, condition: torch.Tensor) -> Optional[torch.Tensor]:
        if self.cond_embedder is None:
            return None
        return self.cond_embedder(condition)

    def encode(self, x: torch.Tensor, t_embed: torch.Tensor) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        z, skips = self.encoder(x, t_embed)
        _check_finite("encoder", z)
        return z, skips

    def latent_transform(self, z: torch.Tensor, cond_embed: Optional[torch.Tensor],
                         t_embed: torch.Tensor) -> torch.Tensor:
        z = self.latent(z, cond_embed, t_embed)
        _check_finite("latent", z)
        return z

    def decode(self, z: torch.Tensor, skips: List[torch.Tensor], t_embed: torch.Tensor) -> torch.Tensor:
        out = self.decoder(z, skips, t_embed)
        _check_finite("decoder", out)
        return out

    def forward(self, x_t: torch.Tensor, condition: torch.Tensor, t: Union[int, torch.Tensor]) -> torch.Tensor:
        self._check_shapes(x_t, condition)
        x = torch.cat([x_t, condition], dim=1)
        t_embed = self.embed_timestep(t, x.shape[0], x.device)
        cond_embed = self.embed_condition(condition)
        z, skips = self.encode(x, t_embed)
        z = self.latent_transform(z, cond_embed, t_embed)
        if not self.config.latent_kind.uses_skips:
            skips = []
        return self.decode(z, skips, t_embed)

    def _check_shapes(self, x_t: torch.Tensor, condition: torch.Tensor):
        size = self.config.image_size
        if x_t.ndim != 4 or x_t.shape[1] != TARGET_CHANNELS:
            raise InferenceError(f"x_t must be (B, {TARGET_CHANNELS}, H, W), got {tuple(x_t.shape)}")
        if condition.ndim != 4 or condition.shape[1] != CONDITION_CHANNELS:
            raise InferenceError(f"condition must be (B, {CONDITION_CHANNELS}, H, W), got {tuple(condition.shape)}")
        if x_t.shape[0] != condition.shape[0] or x_t.shape[2:] != condition.shape[2:]:
            raise InferenceError(
                f"x_t {tuple(x_t.shape)} and condition {tuple(condition.shape)} do not describe the same grid"
            )
        if tuple(x_t.shape[2:]) != (size, size):
            raise InferenceError(f"Model was built for {size}x{size} fields, got {tuple(x_t.shape[2:])}")

    def describe(self) -> Dict[str, Any]:
        info = self.config.summary()
        info["parameters"] = count_parameters(self)
        return info


def predict_noise(model: nn.Module, x_t: torch.Tensor, condition: torch.Tensor,
                  t: Union[int, torch.Tensor]) -> torch.Tensor:
    """eps_hat for a noisy field under its condition at timestep t."""
    return model(x_t, condition, t)


def count_parameters(model: nn.Module, trainable_only: bool = True) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad or not trainable_only)


def build_denoiser(config: DenoiserConfig, seed: Optional[int] = None) -> DenoiserBackbone:
    """Build a backbone, seeding torch first when a seed is given."""
    if seed is not None:
        torch.manual_seed(int(seed))
    model = DenoiserBackbone(config)
    logger.info("Built %s denoiser with %d parameters", config.latent_kind.value, count_parameters(model))
    return model


__all__ = [
    "CONDITION_CHANNELS",
    "TARGET_CHANNELS",
    "DenoiserBackbone",
    "LatentKind",
    "build_denoiser",
    "count_parameters",
    "predict_noise",
]
