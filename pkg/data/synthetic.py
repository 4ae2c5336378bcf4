"""
Synthetic Flow Dataset
Analytic potential flow past a circular obstacle, used as a desk-scale
stand-in for CFD data. The mean field depends on the angle of attack and,
through a lift-like circulation, on the Reynolds number. Replicate noise is
injected only inside a wake band behind the obstacle and grows with Re.
"""

import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import DataError
from .case_table import ReferenceCases
from .dataset_manager import write_dataset
from .field_sample import CaseSplit, FieldSample, SampleMeta
from .normalization import encode_condition, normalize_raw_case

logger = logging.getLogger(__name__)

FREESTREAM_PRESSURE = 1.0
VELOCITY_SCALE = 1.0e6
ENVELOPE_FLOOR = 1e-3


def cell_centers(shape: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """(x, y) of cell centres covering [-1, 1]^2, rows running along y."""
    height, width = shape
    xs = -1.0 + (np.arange(width) + 0.5) * 2.0 / width
    ys = -1.0 + (np.arange(height) + 0.5) * 2.0 / height
    return np.meshgrid(xs, ys)


def circulation_factor(reynolds: float) -> float:
    """Fraction of the Kutta circulation carried at a given Reynolds number."""
    return 0.5 * reynolds / (reynolds + 5.0e6)


def noise_amplitude(noise_scale: float, reynolds: float) -> float:
    return noise_scale * (1.0 + reynolds / 1.0e7)


def cylinder_mask(shape: Tuple[int, int], radius: float = 0.25) -> np.ndarray:
    """1 for cells whose centre lies inside the obstacle, 0 elsewhere."""
    x, y = cell_centers(shape)
    return (np.hypot(x, y) < radius).astype(np.float64)


def potential_flow(shape: Tuple[int, int], reynolds: float, alpha_deg: float, radius: float = 0.25,
                   circulation: bool = True) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
    """Raw (pressure, u_x, u_y, mask, |u_f|) of uniform flow past a cylinder at the origin."""
    x, y = cell_centers(shape)
    z = x + 1j * y
    mask = cylinder_mask(shape, radius)
    speed = reynolds / VELOCITY_SCALE
    alpha = np.deg2rad(alpha_deg)
    gamma = 4.0 * np.pi * radius * speed * np.sin(alpha) * circulation_factor(reynolds) if circulation else 0.0

    safe_z = np.where(mask > 0, radius + 0j, z)
    # dW/dz = u - i v for a doublet in uniform flow plus a point vortex
    dw = speed * (np.exp(-1j * alpha) - radius ** 2 * np.exp(1j * alpha) / safe_z ** 2) + 1j * gamma / (2 * np.pi * safe_z)
    velocity_x = dw.real
    velocity_y = -dw.imag
    pressure = FREESTREAM_PRESSURE + 0.5 * (speed ** 2 - (velocity_x ** 2 + velocity_y ** 2))
    solid = mask > 0
    for field in (pressure, velocity_x, velocity_y):
        field[solid] = 0.0
    return pressure, velocity_x, velocity_y, mask, speed


def wake_envelope(shape: Tuple[int, int], alpha_deg: float, radius: float = 0.25,
                  width: Optional[float] = None) -> np.ndarray:
    """Gaussian band downstream of the obstacle, zero where it falls below the floor."""
    x, y = cell_centers(shape)
    alpha = np.deg2rad(alpha_deg)
    along = x * np.cos(alpha) + y * np.sin(alpha)
    across = -x * np.sin(alpha) + y * np.cos(alpha)
    width = 0.5 * radius if width is None else width
    envelope = np.exp(-(across / width) ** 2)
    envelope[(along < radius) | (np.hypot(x, y) < radius)] = 0.0
    envelope[envelope < ENVELOPE_FLOOR] = 0.0
    return envelope


def generate_synthetic_case(shape: Tuple[int, int], reynolds: float, alpha_deg: float, noise_scale: float,
                            rng: np.random.Generator, replicates: int = 20, case_id: int = 0,
                            re_max: Optional[float] = None, radius: float = 0.25,
                            circulation: bool = True) -> List[FieldSample]:
    """Replicates of one case: the normalized potential flow plus wake-band Gaussian noise."""
    if noise_scale < 0:
        raise DataError(f"noise_scale must be >= 0, got {noise_scale}")
    if replicates < 1:
        raise DataError(f"replicates must be >= 1, got {replicates}")
    if not 0 < radius < 1:
        raise DataError(f"radius must lie in (0, 1), got {radius}")
    shape = (int(shape[0]), int(shape[1]))
    pressure, velocity_x, velocity_y, mask, speed = potential_flow(shape, reynolds, alpha_deg, radius, circulation)
    alpha = np.deg2rad(alpha_deg)
    mean = normalize_raw_case(pressure, velocity_x, velocity_y,
                              (speed * np.cos(alpha), speed * np.sin(alpha)), FREESTREAM_PRESSURE, mask=mask)
    condition = encode_condition(mask, reynolds, alpha_deg, reynolds if re_max is None else re_max)
    envelope = wake_envelope(shape, alpha_deg, radius) * noise_amplitude(noise_scale, reynolds)

    samples = []
    for replicate in range(replicates):
        noise = rng.standard_normal((3,) + shape) * envelope
        samples.append(FieldSample(
            condition=condition.astype(np.float32),
            target=(mean + noise).astype(np.float32),
            meta=SampleMeta(case_id=int(case_id), reynolds=float(reynolds), alpha_deg=float(alpha_deg),
                            replicate=replicate),
        ))
    return samples


def build_synthetic_dataset(out_dir: Union[str, Path], grid: int = 16, replicates: int = 20,
                            noise_scale: float = 0.05, seed: int = 0, alpha_deg: Optional[float] = None,
                            case_ids: Optional[Sequence[int]] = None, radius: float = 0.25,
                            circulation: bool = True) -> Path:
    """Write a dataset of reference-table cases rendered with the synthetic flow."""
    split_all = ReferenceCases.split(alpha_deg)
    wanted = sorted(case_ids) if case_ids is not None else [info.case_id for info in split_all]
    unknown = [c for c in wanted if c not in split_all]
    if unknown:
        raise DataError(f"Unknown reference case ids: {unknown}")
    split = CaseSplit()
    for case_id in wanted:
        split.add(split_all[case_id])
    re_max = max(split[c].reynolds for c in wanted)

    samples: List[FieldSample] = []
    for case_id in wanted:
        info = split[case_id]
        rng = np.random.default_rng([int(seed), int(case_id)])
        samples.extend(generate_synthetic_case(
            (grid, grid), info.reynolds, info.alpha_deg, noise_scale, rng,
            replicates=replicates, case_id=case_id, re_max=re_max, radius=radius, circulation=circulation,
        ))
    logger.info("Generated %d synthetic cases x %d replicates on a %dx%d grid", len(wanted), replicates, grid, grid)
    return write_dataset(out_dir, samples, split, re_max)
