"""Extended Kalman filter and Rauch-Tung-Striebel smoother.

The EKF propagates the 12-state belief with a first-order mean map (position
integrates velocity, velocity integrates an exogenous acceleration input,
Euler angles integrate the inverse rate map, body rates are held constant)
and the exact Jacobian of that map. The correction handles zero-padded
observations through a diagonal selector matrix: padded channels produce
zero gain and leave the belief untouched.

predict/correct/rts_smooth are dimension-agnostic so they double as a plain
linear Kalman filter/smoother when the mean map and Jacobian are supplied
by the caller.
"""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import EUL, OMG, POS, VEL, euler_rate_matrix_inv


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)


@dataclass
class FilterConfig:
    """Filter covariances and step size.

    q, r, p0 are full matrices (the defaults are the scaled identities
    0.0707 I, 0.00707 I and I). dt is the prediction step in seconds.
    """

    q: np.ndarray = field(default_factory=lambda: 0.0707 * np.eye(12))
    r: np.ndarray = field(default_factory=lambda: 0.00707 * np.eye(12))
    p0: np.ndarray = field(default_factory=lambda: np.eye(12))
    dt: float = 0.01


def _sym(P):
    return 0.5 * (P + P.T)


def predict_mean(mean, f, dt: float) -> np.ndarray:
    """Prediction mean map for the 12-state model.

    f is the exogenous acceleration driving the velocity rows (from the
    accelerometer, or computed from thrust and an attitude estimate).
    """
    mean = np.asarray(mean, dtype=float)
    out = mean.copy()
    out[POS] += dt * mean[VEL]
    out[VEL] += dt * np.asarray(f, dtype=float)
    out[EUL] += dt * (euler_rate_matrix_inv(mean[EUL]) @ mean[OMG])
    return out


def phi_jacobian(mean, dt: float) -> np.ndarray:
    """Exact Jacobian of predict_mean with respect to the state."""
    mean = np.asarray(mean, dtype=float)
    phi, theta = mean[6], mean[7]
    wy, wz = mean[10], mean[11]
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    tt = st / ct
    sec2 = 1.0 / (ct * ct)

    F = np.eye(12)
    F[0, 3] = F[1, 4] = F[2, 5] = dt

    # roll row
    F[6, 6] += dt * (cf * tt * wy - sf * tt * wz)
    F[6, 7] = dt * (sf * sec2 * wy + cf * sec2 * wz)
    F[6, 9] = dt
    F[6, 10] = dt * sf * tt
    F[6, 11] = dt * cf * tt
    # pitch row
    F[7, 6] = dt * (-sf * wy - cf * wz)
    F[7, 10] = dt * cf
    F[7, 11] = -dt * sf
    # yaw row
    F[8, 6] = dt * (cf * wy - sf * wz) / ct
    F[8, 7] = dt * (sf * wy + cf * wz) * st * sec2
    F[8, 10] = dt * sf / ct
    F[8, 11] = dt * cf / ct
    return F


def predict(belief: GaussianBelief, f, cfg: FilterConfig) -> GaussianBelief:
    """EKF time update: mean through predict_mean, covariance Phi P Phi^T + Q."""
    mean = predict_mean(belief.mean, f, cfg.dt)
    Phi = phi_jacobian(belief.mean, cfg.dt)
    cov = _sym(Phi @ belief.cov @ Phi.T + cfg.q)
    return GaussianBelief(mean, cov)


def correct(belief: GaussianBelief, y, H, cfg: FilterConfig) -> GaussianBelief:
    """Measurement update with gain K = P H^T (H P H^T + R)^-1.

    Joseph-form covariance update, symmetrized. Zero rows of H make the
    matching entries of y inert (zero gain), so zero-padded observation
    vectors can be passed directly.
    """
    y = np.asarray(y, dtype=float)
    P, H = belief.cov, np.asarray(H, dtype=float)
    S = H @ P @ H.T + cfg.r
    K = np.linalg.solve(S.T, H @ P.T).T
    mean = belief.mean + K @ (y - H @ belief.mean)
    IKH = np.eye(P.shape[0]) - K @ H
    cov = _sym(IKH @ P @ IKH.T + K @ cfg.r @ K.T)
    return GaussianBelief(mean, cov)


def rts_smooth(filtered, predicted, phis):
    """Rauch-Tung-Striebel backward pass.

    Args:
        filtered: list of posterior beliefs, one per step.
        predicted: matching list of prior beliefs; predicted[k] is the
            one-step prediction of step k from step k-1 (predicted[0]
            is unused).
        phis: matching list of transition Jacobians; phis[k] maps step
            k-1 to step k (phis[0] is unused).

    Returns:
        List of smoothed beliefs, same length; the last entry equals the
        last filtered belief.
    """
    n = len(filtered)
    if n == 0:
        return []
    if not (len(predicted) == len(phis) == n):
        raise ValueError("filtered, predicted and phis must have equal length")
    out = [None] * n
    out[-1] = GaussianBelief(filtered[-1].mean.copy(), filtered[-1].cov.copy())
    for k in range(n - 2, -1, -1):
        Pf = filtered[k].cov
        Pp = predicted[k + 1].cov
        C = np.linalg.solve(Pp, phis[k + 1] @ Pf).T
        mean = filtered[k].mean + C @ (out[k + 1].mean - predicted[k + 1].mean)
        cov = _sym(Pf + C @ (out[k + 1].cov - Pp) @ C.T)
        out[k] = GaussianBelief(mean, cov)
    return out
