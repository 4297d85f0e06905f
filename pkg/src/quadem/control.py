"""Waypoint controller: differential-flatness attitude reference + LQR.

The position loop produces a desired acceleration; flatness maps it (with a
yaw setpoint) to a thrust direction and reference Euler angles. A reference
body rate drives the attitude toward that reference with a first-order law,
and an infinite-horizon LQR on the double-integrator pair (position/velocity,
attitude/body rate) closes the loop. The LQR's vertical acceleration output
and angular acceleration outputs are converted back to collective thrust and
body torque; its lateral acceleration outputs are redundant with the
flatness reference and are discarded.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_lyapunov

from .dynamics import (
    EUL,
    OMG,
    ControlInput,
    GimbalLockError,
    QuadParams,
    euler_rate_matrix,
    rotation_body_to_earth,
)

_EPS = 1e-6

# attitude-reference stiffness: euler_rate_ref = -K_THETA * (euler - euler_ref)
K_THETA = 40.0


class DegenerateThrustError(ValueError):
    """Commanded thrust direction is undefined (zero or parallel to yaw axis)."""


class ControlSolverError(RuntimeError):
    """CARE solve failed (uncontrollable pair or no stabilizing solution)."""


@dataclass
class FlatInput:
    """Flat outputs for one control step: desired acceleration and yaw,
    plus the position/velocity setpoints passed through to the LQR."""

    accel: np.ndarray
    yaw: float = 0.0
    pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.accel = np.asarray(self.accel, dtype=float)
        self.pos = np.asarray(self.pos, dtype=float)
        self.vel = np.asarray(self.vel, dtype=float)


@dataclass
class ReferenceState:
    """Full-state reference fed to the LQR."""

    pos: np.ndarray
    vel: np.ndarray
    euler: np.ndarray
    omega: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel, self.euler, self.omega])


def flat_reference(flat: FlatInput, euler_est, gravity: float = 9.81,
                   k_theta: float = K_THETA) -> ReferenceState:
    """Map flat outputs to a full-state reference.

    Builds the desired body axes from the thrust vector t = accel + g e3 and
    the yaw heading, extracts ZYX Euler angles, and converts the first-order
    attitude error law euler_rate = -k_theta (euler_est - euler_ref) into a
    body-rate reference through the Euler-rate matrix at the current
    attitude estimate.

    Raises:
        DegenerateThrustError: ||t|| ~ 0 or t parallel to the yaw's y axis.
    """
    euler_est = np.asarray(euler_est, dtype=float)
    t = flat.accel + np.array([0.0, 0.0, gravity])
    tn = np.linalg.norm(t)
    if tn < _EPS:
        raise DegenerateThrustError("thrust vector vanishes (free-fall command)")
    zb = t / tn
    yc = np.array([-np.sin(flat.yaw), np.cos(flat.yaw), 0.0])
    xb = np.cross(yc, zb)
    xbn = np.linalg.norm(xb)
    if xbn < _EPS:
        raise DegenerateThrustError("thrust direction parallel to yaw y axis")
    xb /= xbn
    yb = np.cross(zb, xb)

    # columns are the body axes in the earth frame
    st = -xb[2]
    st = np.clip(st, -1.0, 1.0)
    theta = np.arcsin(st)
    ct = np.cos(theta)
    if abs(ct) < _EPS:
        raise DegenerateThrustError("reference pitch at gimbal lock")
    phi = np.arctan2(yb[2] / ct, zb[2] / ct)
    psi = np.arctan2(xb[1] / ct, xb[0] / ct)
    euler_ref = np.array([phi, theta, psi])
    # keep the yaw reference on the estimate's winding so the error law
    # acts on the wrapped difference instead of commanding full turns
    euler_ref[2] += 2.0 * np.pi * np.round(
        (euler_est[2] - euler_ref[2]) / (2.0 * np.pi))

    euler_rate = -k_theta * (euler_est - euler_ref)
    omega_ref = euler_rate_matrix(euler_est) @ euler_rate
    return ReferenceState(
        pos=flat.pos.copy(), vel=flat.vel.copy(), euler=euler_ref, omega=omega_ref
    )


def linearized_ab():
    """Double-integrator linearization used by the LQR.

    Position rows integrate velocity, Euler rows integrate body rate;
    the six inputs are three linear accelerations and three angular
    accelerations.
    """
    A = np.zeros((12, 12))
    A[0, 3] = A[1, 4] = A[2, 5] = 1.0
    A[6, 9] = A[7, 10] = A[8, 11] = 1.0
    B = np.zeros((12, 6))
    B[3:6, 0:3] = np.eye(3)
    B[9:12, 3:6] = np.eye(3)
    return A, B


def default_weights():
    """Default LQR weights: position error at 10, everything else at 1."""
    q = np.ones(12)
    q[0:3] = 10.0
    return np.diag(q), np.eye(6)


def solve_care(A, B, Q, R, tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
    """Stabilizing solution of A'P + PA - P B R^-1 B' P + Q = 0.

    Newton-Kleinman iteration seeded with a Bass stabilizing gain: with
    beta exceeding the largest real eigenvalue part of A, the Lyapunov
    solution Z of (A + beta I) Z + Z (A + beta I)' = 2 B B' gives K0 =
    B' Z^-1 such that A - B K0 is Hurwitz; each Newton step then solves a
    Lyapunov equation for the closed-loop cost.

    Raises:
        ControlSolverError: pair appears uncontrollable or iteration fails.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    n = A.shape[0]

    beta = 1.0 + np.linalg.norm(A, 2)
    try:
        Z = solve_lyapunov(-(A + beta * np.eye(n)), -2.0 * B @ B.T)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - scipy internal
        raise ControlSolverError(f"Bass Lyapunov solve failed: {exc}") from exc
    zcond = np.linalg.cond(Z)
    if not np.isfinite(zcond) or zcond > 1e12:
        raise ControlSolverError("Bass initialization failed; pair likely uncontrollable")
    K = np.linalg.solve(Z.T, B).T  # B' Z^-1

    Rinv_Bt = np.linalg.solve(R, B.T)
    P = None
    for _ in range(max_iter):
        Acl = A - B @ K
        if np.max(np.linalg.eigvals(Acl).real) >= 0.0:
            raise ControlSolverError("Newton-Kleinman iterate lost stability")
        P = solve_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        P = 0.5 * (P + P.T)
        K_next = Rinv_Bt @ P
        step = np.max(np.abs(K_next - K))
        K = K_next
        if step < tol:
            break
    else:
        raise ControlSolverError("Newton-Kleinman did not converge")

    resid = A.T @ P + P @ A - P @ B @ Rinv_Bt @ P + Q
    if np.max(np.abs(resid)) > 1e-8:
        raise ControlSolverError(f"CARE residual too large: {np.max(np.abs(resid)):g}")
    return P


def lqr_gain(A, B, Q, R) -> np.ndarray:
    """LQR gain K = R^-1 B' P with a Hurwitz closed loop guaranteed."""
    P = solve_care(A, B, Q, R)
    K = np.linalg.solve(R, B.T @ P)
    eigs = np.linalg.eigvals(A - B @ K)
    if np.max(eigs.real) >= 0.0:
        raise ControlSolverError("closed loop not Hurwitz")
    return K


def lqg_control(x_est, ref: ReferenceState, K) -> np.ndarray:
    """Feedback on the estimated state: u = -K (x_est - x_ref).

    Returns the six-vector [u_ax, u_ay, u_az, u_wx, u_wy, u_wz] of linear
    and angular acceleration commands.
    """
    x_est = np.asarray(x_est, dtype=float)
    return -K @ (x_est - ref.vector())


def recover_thrust_torque(u, x_est, p: QuadParams) -> ControlInput:
    """Convert acceleration commands into collective thrust and body torque.

    F = (u_az + g) m / (cos phi cos theta), clamped at zero; the lateral
    acceleration commands are produced by the flatness reference instead
    and are ignored here. M = I w_dot_cmd + w x I w at the estimated rate.

    Raises:
        GimbalLockError: estimated attitude too close to +-pi/2 pitch/roll.
    """
    u = np.asarray(u, dtype=float)
    x_est = np.asarray(x_est, dtype=float)
    phi, theta = x_est[EUL][0], x_est[EUL][1]
    ctilt = np.cos(phi) * np.cos(theta)
    if abs(ctilt) < _EPS:
        raise GimbalLockError("thrust recovery undefined at 90 degree tilt")
    F = (u[2] + p.gravity) * p.mass / ctilt
    F = max(F, 0.0)
    omega = x_est[OMG]
    M = p.inertia * u[3:6] + np.cross(omega, p.inertia * omega)
    return ControlInput(thrust=F, torque=M)
