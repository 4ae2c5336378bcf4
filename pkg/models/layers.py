"""
Network Layers
Embeddings, attention and residual blocks shared by the encoder, the latent
transformer and the decoder.
"""

import math
from typing import Optional

import torch
import torch.nn as nn


def modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    """Adaptive layer-norm modulation of a token sequence."""
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


def group_count(channels: int, groups: int) -> int:
    """Largest group count <= groups that divides channels."""
    return math.gcd(channels, groups) or 1


def head_count(dim: int, heads: int) -> int:
    """Largest head count <= heads that divides dim."""
    for candidate in range(min(heads, dim), 0, -1):
        if dim % candidate == 0:
            return candidate
    return 1


class TimestepEmbedder(nn.Module):
    """Sinusoidal timestep features followed by a two-layer MLP."""

    def __init__(self, hidden_size: int, frequency_embedding_size: int = 256):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(frequency_embedding_size, hidden_size),
            nn.SiLU(),
            nn.Linear(hidden_size, hidden_size),
        )
        self.frequency_embedding_size = frequency_embedding_size

    @staticmethod
    def timestep_embedding(t: torch.Tensor, dim: int, max_period: int = 10000) -> torch.Tensor:
        """(N,) timesteps -> (N, dim) sinusoidal features."""
        half = dim // 2
        freqs = torch.exp(
            -math.log(max_period) * torch.arange(start=0, end=half, dtype=torch.float64, device=t.device) / half
        )
        args = t[:, None].to(torch.float64) * freqs[None]
        return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        t_freq = self.timestep_embedding(t, self.frequency_embedding_size)
        return self.mlp(t_freq.to(self.mlp[0].weight.dtype))


class ConditionEmbedder(nn.Module):
    """Pools the condition channels and embeds them for latent modulation."""

    def __init__(self, condition_channels: int, hidden_size: int):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(condition_channels, hidden_size),
            nn.SiLU(),
            nn.Linear(hidden_size, hidden_size),
        )

    def forward(self, condition: torch.Tensor) -> torch.Tensor:
        return self.mlp(condition.mean(dim=(2, 3)))


class MultiHeadSelfAttention(nn.Module):
    """softmax(Q K^T / sqrt(d_head)) V over a token sequence."""

    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads != 0:
            raise ValueError(f"dim {dim} is not divisible by num_heads {num_heads}")
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.o_proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, need_weights: bool = False):
        B, N, C = x.shape

        # [B, heads, N, head_dim]
        qry = self.q_proj(x).view(B, N, self.num_heads, self.head_dim).transpose(1, 2)
        key = self.k_proj(x).view(B, N, self.num_heads, self.head_dim).transpose(1, 2)
        val = self.v_proj(x).view(B, N, self.num_heads, self.head_dim).transpose(1, 2)

        attn = (qry @ key.transpose(-2, -1)) * (self.head_dim ** -0.5)
        attn = attn.softmax(dim=-1)
        out = (attn @ val).transpose(1, 2).reshape(B, N, C)
        out = self.o_proj(out)
        if need_weights:
            return out, attn
        return out


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden_dim)
        self.act = nn.GELU(approximate="tanh")
        self.fc2 = nn.Linear(hidden_dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class ResidualBlock(nn.Module):
    """f(y) = y + H(y), H being two group-normed GELU convolutions."""

    def __init__(self, channels: int, emb_dim: Optional[int] = None, groups: int = 8):
        super().__init__()
        self.norm1 = nn.GroupNorm(group_count(channels, groups), channels)
        self.conv1 = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        self.norm2 = nn.GroupNorm(group_count(channels, groups), channels)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        self.act = nn.GELU()
        self.emb_proj = nn.Linear(emb_dim, channels) if emb_dim else None

    def forward(self, y: torch.Tensor, emb: Optional[torch.Tensor] = None) -> torch.Tensor:
        h = self.conv1(self.act(self.norm1(y)))
        if self.emb_proj is not None and emb is not None:
            h = h + self.emb_proj(emb)[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return y + h

    def zero_init_(self):
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)


class SpatialSelfAttention(nn.Module):
    """Self-attention over a feature map with learnable positional encodings."""

    def __init__(self, channels: int, resolution: int, num_heads: int, groups: int = 8):
        super().__init__()
        self.norm = nn.GroupNorm(group_count(channels, groups), channels)
        self.pos = nn.Parameter(torch.zeros(1, resolution * resolution, channels))
        self.attn = MultiHeadSelfAttention(channels, head_count(channels, num_heads))
        nn.init.trunc_normal_(self.pos, std=0.02)

    def forward(self, x: torch.Tensor, need_weights: bool = False):
        B, C, H, W = x.shape
        tokens = self.norm(x).flatten(2).transpose(1, 2) + self.pos
        out, weights = self.attn(tokens, need_weights=True)
        out = x + out.transpose(1, 2).reshape(B, C, H, W)
        if need_weights:
            return out, weights
        return out

    def zero_init_(self):
        nn.init.zeros_(self.attn.o_proj.weight)
        nn.init.zeros_(self.attn.o_proj.bias)


class DiTBlock(nn.Module):
    """Transformer block with adaptive layer-norm-zero conditioning."""

    def __init__(self, hidden_size: int, num_heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(hidden_size, elementwise_affine=False, eps=1e-6)
        self.attn = MultiHeadSelfAttention(hidden_size, num_heads)
        self.norm2 = nn.LayerNorm(hidden_size, elementwise_affine=False, eps=1e-6)
        self.mlp = Mlp(hidden_size, int(hidden_size * mlp_ratio))
        self.adaLN_modulation = nn.Sequential(
            nn.SiLU(),
            nn.Linear(hidden_size, 6 * hidden_size),
        )

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        shift_msa, scale_msa, gate_msa, shift_mlp, scale_mlp, gate_mlp = self.adaLN_modulation(c).chunk(6, dim=1)
        x = x + gate_msa.unsqueeze(1) * self.attn(modulate(self.norm1(x), shift_msa, scale_msa))
        x = x + gate_mlp.unsqueeze(1) * self.mlp(modulate(self.norm2(x), shift_mlp, scale_mlp))
        return x

    def zero_init_(self):
        # Zero gates make the block an identity map.
        nn.init.zeros_(self.adaLN_modulation[-1].weight)
        nn.init.zeros_(self.adaLN_modulation[-1].bias)


class FinalLayer(nn.Module):
    """Modulated layer norm and projection from tokens back to patches."""

    def __init__(self, hidden_size: int, patch_size: int, out_channels: int):
        super().__init__()
        self.norm_final = nn.LayerNorm(hidden_size, elementwise_affine=False, eps=1e-6)
        self.linear = nn.Linear(hidden_size, patch_size * patch_size * out_channels)
        self.adaLN_modulation = nn.Sequential(
            nn.SiLU(),
            nn.Linear(hidden_size, 2 * hidden_size),
        )

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        shift, scale = self.adaLN_modulation(c).chunk(2, dim=1)
        return self.linear(modulate(self.norm_final(x), shift, scale))

    def zero_init_(self):
        for layer in (self.adaLN_modulation[-1], self.linear):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)


def unpatchify(tokens: torch.Tensor, channels: int, patch_size: int, grid: int) -> torch.Tensor:
    """(B, N, p*p*C) -> (B, C, grid*p, grid*p)."""
    B = tokens.shape[0]
    x = tokens.reshape(B, grid, grid, patch_size, patch_size, channels)
    x = torch.einsum("nhwpqc->nchpwq", x)
    return x.reshape(B, channels, grid * patch_size, grid * patch_size)
