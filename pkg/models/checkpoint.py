"""
Checkpoint Files
This module reads and writes the portable ``.fdc`` checkpoint container:

    magic      8 bytes  b"FDCKPT01"
    version    uint32   format version (1)
    config     uint32 length + UTF-8 JSON of the DenoiserConfig
    count      uint32   number of tensors
    per tensor uint32 name length + UTF-8 name, uint32 ndim,
               ndim x uint32 dims, little-endian float32 values

All integers are little-endian. Optimizer state and the training iteration
are kept separately in ``<stem>.optim.pt`` so the weights file stays
readable without torch.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch

from utils.errors import ConfigError, ParseError
from .config import DenoiserConfig
from .denoiser import DenoiserBackbone

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"FDCKPT01"
CHECKPOINT_VERSION = 1

PathLike = Union[str, Path]


def ema_path(path: PathLike) -> Path:
    """Sibling file holding the EMA weights of a checkpoint."""
    path = Path(path)
    return path.with_name(f"{path.stem}.ema{path.suffix}")


def optimizer_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}.optim.pt")


def write_checkpoint(path: PathLike, config: DenoiserConfig, state: Dict[str, torch.Tensor]) -> Path:
    """Write a config record and named float32 tensors."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    config_bytes = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(config_bytes)))
        f.write(config_bytes)
        f.write(struct.pack("<I", len(state)))
        for name, tensor in state.items():
            values = tensor.detach().cpu().to(torch.float32).numpy()
            name_bytes = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_bytes)))
            f.write(name_bytes)
            f.write(struct.pack("<I", values.ndim))
            if values.ndim:
                f.write(struct.pack(f"<{values.ndim}I", *values.shape))
            f.write(values.astype("<f4").tobytes())
    return path


def _read_exact(f, size: int, what: str, path: Path) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise ParseError(f"{path}: truncated while reading {what}")
    return data


def read_checkpoint(path: PathLike) -> Tuple[DenoiserConfig, Dict[str, torch.Tensor]]:
    """Parse a checkpoint into its config and state dict."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"Checkpoint not found: {path}")
    with open(path, "rb") as f:
        magic = _read_exact(f, 8, "magic", path)
        if magic != CHECKPOINT_MAGIC:
            raise ParseError(f"{path}: not a foildiff checkpoint (magic {magic!r})")
        version, config_len = struct.unpack("<II", _read_exact(f, 8, "header", path))
        if version != CHECKPOINT_VERSION:
            raise ParseError(f"{path}: unsupported checkpoint version {version}")
        try:
            record = json.loads(_read_exact(f, config_len, "config", path).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ParseError(f"{path}: config record is not valid JSON: {e}") from e
        try:
            config = DenoiserConfig.from_dict(record)
        except ConfigError as e:
            raise ParseError(f"{path}: config record rejected: {e}") from e

        (count,) = struct.unpack("<I", _read_exact(f, 4, "tensor count", path))
        state: Dict[str, torch.Tensor] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, "name length", path))
            try:
                name = _read_exact(f, name_len, "tensor name", path).decode("utf-8")
            except UnicodeDecodeError as e:
                raise ParseError(f"{path}: tensor {len(state)}: name is not valid UTF-8: {e}") from e
            (ndim,) = struct.unpack("<I", _read_exact(f, 4, f"ndim of {name}", path))
            dims = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, f"dims of {name}", path)) if ndim else ()
            size = int(np.prod(dims, dtype=np.int64))
            values = np.frombuffer(_read_exact(f, 4 * size, f"values of {name}", path), dtype="<f4")
            state[name] = torch.from_numpy(values.astype(np.float32).reshape(dims))
        if f.read(1):
            raise ParseError(f"{path}: trailing bytes after {count} tensors")
    return config, state


def save_checkpoint(path: PathLike, model: DenoiserBackbone, optimizer: Optional[torch.optim.Optimizer] = None,
                    iteration: Optional[int] = None, ema_model: Optional[DenoiserBackbone] = None) -> Path:
    """Weights (plus EMA weights and optimizer state when given)."""
    path = write_checkpoint(path, model.config, model.state_dict())
    if ema_model is not None:
        write_checkpoint(ema_path(path), ema_model.config, ema_model.state_dict())
    if optimizer is not None:
        torch.save({"iteration": iteration, "optimizer": optimizer.state_dict()}, optimizer_path(path))
    logger.info("Saved checkpoint %s (iteration %s)", path, iteration)
    return path


def load_checkpoint(path: PathLike, device: str = "cpu", prefer_ema: bool = False) -> DenoiserBackbone:
    """Rebuild the backbone a checkpoint describes and load its weights."""
    path = Path(path)
    if prefer_ema and ema_path(path).exists():
        path = ema_path(path)
    config, state = read_checkpoint(path)
    model = DenoiserBackbone(config)
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise ParseError(f"{path}: tensors do not match the recorded config: {e}") from e
    return model.to(device)


def load_training_state(path: PathLike) -> Dict[str, Any]:
    """Optimizer state and iteration saved next to a checkpoint."""
    state_path = optimizer_path(path)
    if not state_path.exists():
        raise ParseError(f"No optimizer state next to {path} (expected {state_path})")
    return torch.load(state_path, map_location="cpu")
