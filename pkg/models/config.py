"""
Denoiser Configuration
Hyperparameters of the hybrid encoder / latent transformer / decoder network.
"""

from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from utils.errors import ConfigError


class LatentKind(str, Enum):
    DIT = "dit"
    UVIT = "uvit"
    UNET_MID = "unet_mid"
    NONE_SKIPLESS_DIT = "none_skipless_dit"

    @property
    def uses_transformer(self) -> bool:
        return self != LatentKind.UNET_MID

    @property
    def uses_skips(self) -> bool:
        return self != LatentKind.NONE_SKIPLESS_DIT


@dataclass
class DenoiserConfig:
    """Description of one denoiser network."""

    image_size: int = 32
    input_channels: int = 6
    output_channels: int = 3
    base_width: int = 64
    depth: int = 2
    attn_levels: Optional[Tuple[int, ...]] = None
    latent_kind: LatentKind = LatentKind.DIT
    latent_blocks: int = 8
    latent_heads: int = 4
    embed_dim: int = 256
    patch_size: int = 1
    time_embed_dim: int = 256
    mlp_ratio: float = 4.0
    norm_groups: int = 8

    def __post_init__(self):
        try:
            self.latent_kind = LatentKind(self.latent_kind)
        except ValueError as e:
            raise ConfigError(f"backbone.latent_kind: {e}") from e
        if self.attn_levels is not None:
            self.attn_levels = tuple(int(r) for r in self.attn_levels)
        self.validate()

    def validate(self):
        """Reject configurations the network cannot be built from."""
        for name in ("image_size", "input_channels", "output_channels", "base_width", "latent_blocks",
                     "latent_heads", "embed_dim", "patch_size", "time_embed_dim", "norm_groups"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"backbone.{name} must be >= 1, got {getattr(self, name)}")
        if self.depth < 0:
            raise ConfigError(f"backbone.depth must be >= 0, got {self.depth}")
        if self.image_size % (2 ** self.depth) != 0:
            raise ConfigError(
                f"backbone.image_size {self.image_size} is not divisible by 2^depth = {2 ** self.depth}"
            )
        if self.latent_size % self.patch_size != 0:
            raise ConfigError(
                f"backbone.patch_size {self.patch_size} does not divide the latent size {self.latent_size}"
            )
        if self.embed_dim % self.latent_heads != 0:
            raise ConfigError(
                f"backbone.embed_dim {self.embed_dim} is not divisible by latent_heads {self.latent_heads}"
            )
        if self.time_embed_dim % 2 != 0:
            raise ConfigError(f"backbone.time_embed_dim must be even, got {self.time_embed_dim}")
        if self.mlp_ratio <= 0:
            raise ConfigError(f"backbone.mlp_ratio must be > 0, got {self.mlp_ratio}")
        unknown = set(self.resolved_attn_levels) - set(self.stage_resolutions())
        if unknown:
            raise ConfigError(
                f"backbone.attn_levels {sorted(unknown)} are not stage resolutions {self.stage_resolutions()}"
            )

    @property
    def latent_size(self) -> int:
        return self.image_size // (2 ** self.depth)

    @property
    def num_tokens(self) -> int:
        return (self.latent_size // self.patch_size) ** 2

    @property
    def resolved_attn_levels(self) -> Tuple[int, ...]:
        if self.attn_levels is None:
            return tuple(self.stage_resolutions())
        return self.attn_levels

    def stage_channels(self) -> List[int]:
        """Channel width at each resolution, finest first, bottleneck last."""
        return [self.base_width * 2 ** i for i in range(self.depth + 1)]

    def stage_resolutions(self) -> List[int]:
        """Spatial size of each encoder/decoder stage, finest first."""
        return [self.image_size // 2 ** i for i in range(self.depth)]

    def summary(self) -> Dict[str, Any]:
        return {
            "latent_kind": self.latent_kind.value,
            "stage_channels": self.stage_channels(),
            "stage_resolutions": self.stage_resolutions(),
            "attn_levels": list(self.resolved_attn_levels),
            "latent_size": self.latent_size,
            "num_tokens": self.num_tokens,
            "latent_blocks": self.latent_blocks,
        }

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["latent_kind"] = self.latent_kind.value
        record["attn_levels"] = None if self.attn_levels is None else list(self.attn_levels)
        return record

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "DenoiserConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(record) - known
        if unknown:
            raise ConfigError(f"Unknown backbone keys: {sorted(unknown)}")
        try:
            return cls(**record)
        except TypeError as e:
            raise ConfigError(f"Invalid backbone record: {e}") from e

    def with_kind(self, kind: LatentKind) -> "DenoiserConfig":
        record = self.to_dict()
        record["latent_kind"] = LatentKind(kind).value
        return DenoiserConfig.from_dict(record)
