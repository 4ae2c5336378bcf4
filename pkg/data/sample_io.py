"""
Sample Files
This module reads and writes the ``.fds`` sample container, little-endian:

    bytes 0-7    magic b"FOILDIFF"
    bytes 8-11   uint32 format version (1)
    bytes 12-15  uint32 reserved (0)
    bytes 16-47  case id (uint32), Re (float64), alpha degrees (float64),
                 replicate (uint32), H (uint32), W (uint32)
    then         six H x W float32 planes: mask, Re cos a, Re sin a, p, u_x, u_y
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from utils.errors import ParseError
from .field_sample import CHANNEL_NAMES, FieldSample, SampleMeta

SAMPLE_MAGIC = b"FOILDIFF"
SAMPLE_VERSION = 1
SAMPLE_SUFFIX = ".fds"

_HEADER = struct.Struct("<8sII")
_META = struct.Struct("<IddIII")


def sample_filename(case_id: int, replicate: int) -> str:
    return f"case{case_id:03d}_rep{replicate:03d}{SAMPLE_SUFFIX}"


def encode_sample(sample: FieldSample) -> bytes:
    """Serialize a sample to bytes."""
    meta = sample.meta
    height, width = sample.shape
    planes = sample.stacked().astype("<f4")
    return b"".join([
        _HEADER.pack(SAMPLE_MAGIC, SAMPLE_VERSION, 0),
        _META.pack(int(meta.case_id), float(meta.reynolds), float(meta.alpha_deg), int(meta.replicate),
                   int(height), int(width)),
        planes.tobytes(),
    ])


def decode_sample(data: bytes, source: str = "<bytes>") -> FieldSample:
    """Parse sample bytes; every failure names the source and the offending field."""
    if len(data) < _HEADER.size:
        raise ParseError(f"{source}: header: file is {len(data)} bytes, shorter than the {_HEADER.size}-byte header")
    magic, version, _reserved = _HEADER.unpack_from(data, 0)
    if magic != SAMPLE_MAGIC:
        raise ParseError(f"{source}: magic: expected {SAMPLE_MAGIC!r}, got {magic!r}")
    if version != SAMPLE_VERSION:
        raise ParseError(f"{source}: version: unsupported sample format version {version}")
    if len(data) < _HEADER.size + _META.size:
        raise ParseError(f"{source}: metadata: truncated metadata record")
    case_id, reynolds, alpha_deg, replicate, height, width = _META.unpack_from(data, _HEADER.size)
    if height == 0 or width == 0:
        raise ParseError(f"{source}: grid: H and W must be positive, got {height} x {width}")
    if not np.isfinite(reynolds):
        raise ParseError(f"{source}: reynolds: non-finite value {reynolds}")
    if not np.isfinite(alpha_deg):
        raise ParseError(f"{source}: alpha_deg: non-finite value {alpha_deg}")
    offset = _HEADER.size + _META.size
    expected = 6 * height * width * 4
    payload = data[offset:]
    if len(payload) != expected:
        plane = min(len(payload) // (height * width * 4), 5)
        raise ParseError(
            f"{source}: {CHANNEL_NAMES[plane]}: plane data is {len(payload)} bytes, expected {expected}"
        )
    planes = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(6, height, width)
    return FieldSample(
        condition=planes[:3].copy(),
        target=planes[3:].copy(),
        meta=SampleMeta(case_id=int(case_id), reynolds=float(reynolds), alpha_deg=float(alpha_deg),
                        replicate=int(replicate)),
    )


def write_sample(path: Union[str, Path], sample: FieldSample) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_sample(sample))
    return path


def read_sample(path: Union[str, Path]) -> FieldSample:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ParseError(f"{path}: unreadable: {e}") from e
    return decode_sample(data, source=str(path))
