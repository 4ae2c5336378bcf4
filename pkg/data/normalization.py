"""
Normalization
Dimensionless targets from raw pressure and velocity, the inverse map, and
the parametric condition encoding.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import ConditionError, NormalizationError

Freestream = Union[float, Sequence[float], np.ndarray]


def freestream_magnitude(freestream_velocity: Freestream) -> float:
    """|u_f| from a speed or a velocity vector."""
    u_f = float(np.linalg.norm(np.atleast_1d(np.asarray(freestream_velocity, dtype=np.float64))))
    if not np.isfinite(u_f) or u_f <= 0:
        raise NormalizationError(f"Freestream velocity magnitude must be > 0, got {u_f}")
    return u_f


def normalize_raw_case(pressure: np.ndarray, velocity_x: np.ndarray, velocity_y: np.ndarray,
                       freestream_velocity: Freestream, freestream_pressure: float,
                       mask: Optional[np.ndarray] = None) -> np.ndarray:
    """(3, H, W) target: (p - p_inf) / |u_f|^2 and u / |u_f|, zero inside the mask."""
    u_f = freestream_magnitude(freestream_velocity)
    pressure = np.asarray(pressure, dtype=np.float64)
    velocity_x = np.asarray(velocity_x, dtype=np.float64)
    velocity_y = np.asarray(velocity_y, dtype=np.float64)
    if not (pressure.shape == velocity_x.shape == velocity_y.shape):
        raise NormalizationError(
            f"Raw fields disagree in shape: p {pressure.shape}, u_x {velocity_x.shape}, u_y {velocity_y.shape}"
        )
    target = np.stack([
        (pressure - float(freestream_pressure)) / u_f ** 2,
        velocity_x / u_f,
        velocity_y / u_f,
    ])
    if mask is not None:
        solid = np.asarray(mask) >= 0.5
        if solid.shape != pressure.shape:
            raise NormalizationError(f"Mask shape {solid.shape} does not match fields {pressure.shape}")
        target[:, solid] = 0.0
    return target


def denormalize_case(target: np.ndarray, freestream_velocity: Freestream,
                     freestream_pressure: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw (pressure, u_x, u_y) from a normalized target."""
    u_f = freestream_magnitude(freestream_velocity)
    target = np.asarray(target, dtype=np.float64)
    if target.ndim != 3 or target.shape[0] != 3:
        raise NormalizationError(f"Target must be 3 x H x W, got {target.shape}")
    return (
        target[0] * u_f ** 2 + float(freestream_pressure),
        target[1] * u_f,
        target[2] * u_f,
    )


def encode_condition(mask: np.ndarray, reynolds: float, alpha_deg: float, re_max: float) -> np.ndarray:
    """(3, H, W) condition: binarized mask, Re cos(a) / re_max, Re sin(a) / re_max."""
    reynolds = float(reynolds)
    re_max = float(re_max)
    if not np.isfinite(reynolds) or reynolds <= 0:
        raise ConditionError(f"Reynolds number must be > 0, got {reynolds}")
    if not np.isfinite(re_max) or re_max < reynolds:
        raise ConditionError(f"re_max {re_max} must be >= Re {reynolds}")
    if not np.isfinite(alpha_deg):
        raise ConditionError(f"Angle of attack must be finite, got {alpha_deg}")
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise ConditionError(f"Mask must be H x W, got {mask.shape}")
    alpha = np.deg2rad(float(alpha_deg))
    condition = np.empty((3,) + mask.shape, dtype=np.float64)
    condition[0] = (mask >= 0.5).astype(np.float64)
    condition[1] = reynolds * np.cos(alpha) / re_max
    condition[2] = reynolds * np.sin(alpha) / re_max
    return condition
