"""
Encoder and Decoder
Convolutional contracting and expanding paths joined by skip connections.
"""

from typing import List, Tuple

import torch
import torch.nn as nn

from utils.errors import ConfigError, InferenceError
from .config import DenoiserConfig
from .layers import ResidualBlock, SpatialSelfAttention, group_count


class EncoderStage(nn.Module):
    """Residual conv block, optional self-attention, then a 2x2 strided downsample."""

    def __init__(self, channels: int, out_channels: int, resolution: int, emb_dim: int,
                 use_attention: bool, heads: int, groups: int):
        super().__init__()
        self.block = ResidualBlock(channels, emb_dim=emb_dim, groups=groups)
        self.attn = SpatialSelfAttention(channels, resolution, heads, groups) if use_attention else None
        self.down = nn.Conv2d(channels, out_channels, kernel_size=2, stride=2)

    def forward(self, x: torch.Tensor, t_embed: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        h = self.block(x, t_embed)
        if self.attn is not None:
            h = self.attn(h)
        return self.down(h), h


class DecoderStage(nn.Module):
    """Transposed-conv upsample, skip fusion by element-wise sum, residual conv block."""

    def __init__(self, in_channels: int, channels: int, resolution: int, emb_dim: int,
                 use_attention: bool, heads: int, groups: int):
        super().__init__()
        self.up = nn.ConvTranspose2d(in_channels, channels, kernel_size=2, stride=2)
        self.block = ResidualBlock(channels, emb_dim=emb_dim, groups=groups)
        self.attn = SpatialSelfAttention(channels, resolution, heads, groups) if use_attention else None

    def forward(self, z: torch.Tensor, skip, t_embed: torch.Tensor) -> torch.Tensor:
        h = self.up(z)
        if skip is not None:
            if skip.shape != h.shape:
                raise InferenceError(f"Skip of shape {tuple(skip.shape)} cannot fuse with {tuple(h.shape)}")
            h = h + skip
        h = self.block(h, t_embed)
        if self.attn is not None:
            h = self.attn(h)
        return h


class Encoder(nn.Module):
    """Stem convolution followed by `depth` downsampling stages."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        channels = config.stage_channels()
        attn_levels = set(config.resolved_attn_levels)
        self.stem = nn.Conv2d(config.input_channels, channels[0], kernel_size=3, padding=1)
        self.stages = nn.ModuleList([
            EncoderStage(
                channels[i], channels[i + 1], resolution, config.embed_dim,
                resolution in attn_levels, config.latent_heads, config.norm_groups,
            )
            for i, resolution in enumerate(config.stage_resolutions())
        ])

    def forward(self, x: torch.Tensor, t_embed: torch.Tensor) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        divisor = 2 ** self.config.depth
        if x.shape[-1] % divisor or x.shape[-2] % divisor:
            raise ConfigError(f"Spatial size {tuple(x.shape[-2:])} is not divisible by 2^depth = {divisor}")
        h = self.stem(x)
        skips = []
        for stage in self.stages:
            h, skip = stage(h, t_embed)
            skips.append(skip)
        return h, skips


class Decoder(nn.Module):
    """Mirror of the encoder ending in a projection to the output channels."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        self.use_skips = config.latent_kind.uses_skips
        channels = config.stage_channels()
        attn_levels = set(config.resolved_attn_levels)
        self.stages = nn.ModuleList([
            DecoderStage(
                channels[i + 1], channels[i], resolution, config.embed_dim,
                resolution in attn_levels, config.latent_heads, config.norm_groups,
            )
            for i, resolution in enumerate(config.stage_resolutions())
        ])
        self.out = nn.Sequential(
            nn.GroupNorm(group_count(channels[0], config.norm_groups), channels[0]),
            nn.GELU(),
            nn.Conv2d(channels[0], config.output_channels, kernel_size=3, padding=1),
        )

    def forward(self, z: torch.Tensor, skips: List[torch.Tensor], t_embed: torch.Tensor) -> torch.Tensor:
        expected = self.config.depth if self.use_skips else 0
        if len(skips) != expected:
            raise InferenceError(f"Decoder expects {expected} skips, got {len(skips)}")
        h = z
        for i in reversed(range(len(self.stages))):
            skip = skips[i] if self.use_skips else None
            h = self.stages[i](h, skip, t_embed)
        return self.out(h)
