"""Rigid-body quadcopter model and Euler-Maruyama SDE integrator.

State layout (12-vector):

    x[0:3]   position in the earth frame [m]
    x[3:6]   velocity in the earth frame [m/s]
    x[6:9]   Euler angles phi, theta, psi (roll, pitch, yaw) [rad]
    x[9:12]  body angular rates wx, wy, wz [rad/s]

The body-to-earth rotation uses the ZYX convention,
R = Rz(psi) @ Ry(theta) @ Rx(phi), so R[2][0] = -sin(theta).
"""

from dataclasses import dataclass, field

import numpy as np

# index slices into the 12-state vector
POS = slice(0, 3)
VEL = slice(3, 6)
EUL = slice(6, 9)
OMG = slice(9, 12)

GRAVITY = 9.81

# |cos(theta)| below this is treated as gimbal lock
_GIMBAL_EPS = 1e-6


class GimbalLockError(ValueError):
    """Pitch too close to +-pi/2 for the Euler-rate map to be invertible."""


@dataclass
class QuadParams:
    """Physical parameters of the vehicle.

    mass in kg, inertia as the (Ixx, Iyy, Izz) diagonal in kg m^2,
    arm_length in m (stored for completeness; the model consumes
    thrust/torque directly, so it does not enter the dynamics).
    """

    mass: float = 0.18
    inertia: np.ndarray = field(
        default_factory=lambda: np.array([2.5e-4, 3.1e-4, 2.0e-4])
    )
    arm_length: float = 0.086
    gravity: float = GRAVITY

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        if self.mass <= 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.inertia.shape != (3,) or np.any(self.inertia <= 0.0):
            raise ValueError("inertia must be three positive diagonal entries")


@dataclass
class ProcessNoiseSpec:
    """Standard deviations of the white-noise forcing on thrust and torque.

    The SDE step injects G(x) @ n * sqrt(dt) with n ~ N(0, diag(spec)^2),
    n = [n_F, n_Mx, n_My, n_Mz].
    """

    sigma_thrust: float = 0.02
    sigma_torque: float = 1e-5

    def __post_init__(self):
        if self.sigma_thrust < 0.0 or self.sigma_torque < 0.0:
            raise ValueError("noise sigmas must be non-negative")

    def stds(self) -> np.ndarray:
        return np.array(
            [self.sigma_thrust, self.sigma_torque, self.sigma_torque, self.sigma_torque]
        )


@dataclass
class ControlInput:
    """Collective thrust F [N] along the body z axis and body torque M [N m]."""

    thrust: float
    torque: np.ndarray

    def __post_init__(self):
        self.torque = np.asarray(self.torque, dtype=float)


def rotation_body_to_earth(euler) -> np.ndarray:
    """Body-to-earth rotation matrix for ZYX Euler angles (phi, theta, psi)."""
    phi, theta, psi = euler
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cy, sy = np.cos(psi), np.sin(psi)
    return np.array(
        [
            [cy * ct, cy * st * sf - sy * cf, cy * st * cf + sy * sf],
            [sy * ct, sy * st * sf + cy * cf, sy * st * cf - cy * sf],
            [-st, ct * sf, ct * cf],
        ]
    )


def euler_rate_matrix(euler) -> np.ndarray:
    """Map from Euler-angle rates to body rates: omega = E @ euler_dot."""
    phi, theta, _ = euler
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [1.0, 0.0, -st],
            [0.0, cf, ct * sf],
            [0.0, -sf, ct * cf],
        ]
    )


def euler_rate_matrix_inv(euler) -> np.ndarray:
    """Inverse Euler-rate map: euler_dot = E^-1 @ omega.

    Raises:
        GimbalLockError: if |cos(theta)| < 1e-6.
    """
    phi, theta, _ = euler
    ct = np.cos(theta)
    if abs(ct) < _GIMBAL_EPS:
        raise GimbalLockError(f"pitch {theta} is within {_GIMBAL_EPS} of gimbal lock")
    cf, sf = np.cos(phi), np.sin(phi)
    tt = np.tan(theta)
    return np.array(
        [
            [1.0, sf * tt, cf * tt],
            [0.0, cf, -sf],
            [0.0, sf / ct, cf / ct],
        ]
    )


def drift(x, u: ControlInput, p: QuadParams) -> np.ndarray:
    """Deterministic state derivative f(x, u).

    Position integrates velocity; velocity sees gravity plus body-z thrust
    rotated into the earth frame; Euler angles integrate the inverse rate
    map; body rates follow Euler's rotation equation with diagonal inertia.
    """
    x = np.asarray(x, dtype=float)
    f = np.empty(12)
    R = rotation_body_to_earth(x[EUL])
    omega = x[OMG]
    iw = p.inertia * omega
    f[POS] = x[VEL]
    f[VEL] = (u.thrust / p.mass) * R[:, 2]
    f[5] -= p.gravity
    f[EUL] = euler_rate_matrix_inv(x[EUL]) @ omega
    f[OMG] = (u.torque - np.cross(omega, iw)) / p.inertia
    return f


def noise_matrix(x, p: QuadParams) -> np.ndarray:
    """Diffusion matrix G(x), 12x4, mapping [n_F, n_Mx, n_My, n_Mz] into the state.

    Thrust noise enters the velocity rows along the body z axis scaled by
    1/m; torque noise enters the body-rate rows scaled by the inverse
    inertia. Position and Euler rows are zero.
    """
    x = np.asarray(x, dtype=float)
    G = np.zeros((12, 4))
    R = rotation_body_to_earth(x[EUL])
    G[VEL, 0] = R[:, 2] / p.mass
    G[9, 1] = 1.0 / p.inertia[0]
    G[10, 2] = 1.0 / p.inertia[1]
    G[11, 3] = 1.0 / p.inertia[2]
    return G


def step_sde(x, u: ControlInput, p: QuadParams, noise: ProcessNoiseSpec, dt: float,
             rng=None) -> np.ndarray:
    """One Euler-Maruyama step: x + f(x,u) dt + G(x) n sqrt(dt).

    Args:
        x: current 12-state.
        u: control input (thrust, torque).
        p: vehicle parameters.
        noise: process-noise standard deviations.
        dt: step size [s].
        rng: numpy Generator; if None the step is deterministic.

    Returns:
        Next 12-state.
    """
    x = np.asarray(x, dtype=float)
    x_next = x + drift(x, u, p) * dt
    if rng is not None:
        n = rng.standard_normal(4) * noise.stds()
        x_next += noise_matrix(x, p) @ n * np.sqrt(dt)
    return x_next
