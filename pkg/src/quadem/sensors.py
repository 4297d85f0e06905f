"""Sensor models.

Three sensor configurations observe the 12-state vector:

    kind 'a': position + gyro in the state observation, plus a body-mounted
              accelerometer channel reporting realized world-frame
              acceleration (used as the filter's velocity-prediction input,
              not as a state measurement);
    kind 'b': full state;
    kind 'c': position, velocity and gyro (no Euler angles).

Observations are returned as 12-vectors zero-padded on unmeasured channels,
with the matching selector matrix available from measurement_matrix().
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

KIND_A = "a"
KIND_B = "b"
KIND_C = "c"
KINDS = (KIND_A, KIND_B, KIND_C)

# diagonal of the 12x12 selector matrix per kind
_H_DIAG = {
    KIND_A: np.array([1, 1, 1, 0, 0, 0, 0, 0, 0, 1, 1, 1], dtype=float),
    KIND_B: np.ones(12),
    KIND_C: np.array([1, 1, 1, 1, 1, 1, 0, 0, 0, 1, 1, 1], dtype=float),
}


@dataclass
class SensorNoiseSpec:
    """Per-block measurement noise standard deviations."""

    sigma_pos: float = 0.01
    sigma_vel: float = 0.01
    sigma_euler: float = 0.01
    sigma_omega: float = 0.01
    sigma_accel: float = 0.01

    def __post_init__(self):
        stds = (self.sigma_pos, self.sigma_vel, self.sigma_euler,
                self.sigma_omega, self.sigma_accel)
        if any(s < 0.0 for s in stds):
            raise ValueError("noise sigmas must be non-negative")

    def state_stds(self) -> np.ndarray:
        """Stds for the 12 state channels."""
        return np.repeat(
            [self.sigma_pos, self.sigma_vel, self.sigma_euler, self.sigma_omega], 3
        )


@dataclass
class Observation:
    """One sensor reading: zero-padded state observation plus optional accel."""

    kind: str
    y: np.ndarray
    accel: Optional[np.ndarray] = None


def measurement_matrix(kind: str) -> np.ndarray:
    """12x12 diagonal selector H for the given sensor kind."""
    if kind not in KINDS:
        raise ValueError(f"unknown sensor kind {kind!r}, expected one of {KINDS}")
    return np.diag(_H_DIAG[kind])


def measurement_diag(kind: str) -> np.ndarray:
    """Diagonal of H as a flat vector (convenience for masking)."""
    if kind not in KINDS:
        raise ValueError(f"unknown sensor kind {kind!r}, expected one of {KINDS}")
    return _H_DIAG[kind].copy()


def observe(kind: str, x, accel=None, noise: Optional[SensorNoiseSpec] = None,
            rng=None) -> Observation:
    """Observe the state through the given sensor.

    Args:
        kind: 'a', 'b' or 'c'.
        x: true 12-state.
        accel: realized world-frame acceleration (3,), required for kind 'a'.
        noise: measurement noise spec; None means noiseless.
        rng: numpy Generator; None means noiseless.

    Returns:
        Observation with y zero-padded on unmeasured channels.

    The same number of random draws is consumed for every kind, so a given
    sensor stream produces identical noise realizations on shared channels
    regardless of which sensor is mounted.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown sensor kind {kind!r}, expected one of {KINDS}")
    x = np.asarray(x, dtype=float)
    if noise is not None and rng is not None:
        eps = rng.standard_normal(15)
        state_noise = eps[:12] * noise.state_stds()
        accel_noise = eps[12:] * noise.sigma_accel
    else:
        state_noise = np.zeros(12)
        accel_noise = np.zeros(3)

    y = _H_DIAG[kind] * (x + state_noise)
    obs_accel = None
    if kind == KIND_A:
        if accel is None:
            raise ValueError("sensor kind 'a' needs the realized acceleration")
        obs_accel = np.asarray(accel, dtype=float) + accel_noise
    return Observation(kind=kind, y=y, accel=obs_accel)
