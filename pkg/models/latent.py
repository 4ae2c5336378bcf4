"""
Latent Transformers
Bottleneck networks operating on the encoder's latent feature map: a DiT
stack, a U-ViT stack with long skips, and a convolutional mid-block.

Every variant adds its output to the incoming latent, so a zero-initialised
final projection makes the whole bottleneck an identity map.
"""

from typing import List, Optional

import torch
import torch.nn as nn

from utils.errors import ConfigError
from .config import DenoiserConfig, LatentKind
from .layers import DiTBlock, FinalLayer, ResidualBlock, unpatchify


class TokenLatent(nn.Module):
    """Patch embedding, learnable positions and the final projection back to a feature map."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        self.channels = config.stage_channels()[-1]
        self.grid = config.latent_size // config.patch_size
        self.patch_embed = nn.Conv2d(
            self.channels, config.embed_dim, kernel_size=config.patch_size, stride=config.patch_size
        )
        self.pos_embed = nn.Parameter(torch.zeros(1, config.num_tokens, config.embed_dim))
        self.final_layer = FinalLayer(config.embed_dim, config.patch_size, self.channels)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)

    def tokens(self, z: torch.Tensor) -> torch.Tensor:
        x = self.patch_embed(z).flatten(2).transpose(1, 2)
        if x.shape[1] != self.pos_embed.shape[1]:
            raise ConfigError(f"Latent yields {x.shape[1]} tokens but positions cover {self.pos_embed.shape[1]}")
        return x + self.pos_embed

    def to_feature_map(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        return unpatchify(self.final_layer(x, c), self.channels, self.config.patch_size, self.grid)

    def blocks_forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def forward(self, z: torch.Tensor, cond_embed: Optional[torch.Tensor], t_embed: torch.Tensor) -> torch.Tensor:
        c = t_embed if cond_embed is None else cond_embed + t_embed
        x = self.blocks_forward(self.tokens(z), c)
        return z + self.to_feature_map(x, c)


class DiTLatent(TokenLatent):
    """D adaptive-layer-norm transformer blocks."""

    def __init__(self, config: DenoiserConfig):
        super().__init__(config)
        self.blocks = nn.ModuleList([
            DiTBlock(config.embed_dim, config.latent_heads, config.mlp_ratio) for _ in range(config.latent_blocks)
        ])

    def blocks_forward(self, x, c):
        for block in self.blocks:
            x = block(x, c)
        return x


class UViTLatent(TokenLatent):
    """DiT blocks with long skips: the first D//2 blocks feed the last D//2 in reverse order."""

    def __init__(self, config: DenoiserConfig):
        super().__init__(config)
        half = config.latent_blocks // 2
        make_block = lambda: DiTBlock(config.embed_dim, config.latent_heads, config.mlp_ratio)
        self.in_blocks = nn.ModuleList([make_block() for _ in range(half)])
        self.mid_block = make_block() if config.latent_blocks % 2 else None
        self.out_blocks = nn.ModuleList([make_block() for _ in range(half)])
        self.skip_linears = nn.ModuleList([nn.Linear(2 * config.embed_dim, config.embed_dim) for _ in range(half)])

    def blocks_forward(self, x, c):
        skips: List[torch.Tensor] = []
        for block in self.in_blocks:
            x = block(x, c)
            skips.append(x)
        if self.mid_block is not None:
            x = self.mid_block(x, c)
        for block, skip_linear in zip(self.out_blocks, self.skip_linears):
            x = skip_linear(torch.cat([x, skips.pop()], dim=-1))
            x = block(x, c)
        return x


class UNetMidLatent(nn.Module):
    """Two residual conv blocks in place of the transformer; no deep conditioning."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        channels = config.stage_channels()[-1]
        self.blocks = nn.ModuleList([
            ResidualBlock(channels, emb_dim=config.embed_dim, groups=config.norm_groups) for _ in range(2)
        ])

    def forward(self, z: torch.Tensor, cond_embed: Optional[torch.Tensor], t_embed: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            z = block(z, t_embed)
        return z


def build_latent(config: DenoiserConfig) -> nn.Module:
    """Latent network for the configured kind."""
    kind = config.latent_kind
    if kind in (LatentKind.DIT, LatentKind.NONE_SKIPLESS_DIT):
        return DiTLatent(config)
    if kind == LatentKind.UVIT:
        return UViTLatent(config)
    if kind == LatentKind.UNET_MID:
        return UNetMidLatent(config)
    raise ConfigError(f"Unsupported latent kind: {kind}")
