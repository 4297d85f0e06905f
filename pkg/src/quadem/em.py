"""EM identification of mass and diagonal inertia from flight data.

The E-step smooths the observed trajectory with the EKF/RTS pair, with the
velocity prediction parameterized by the current mass estimate. The M-steps
are the closed-form maximizers of the expected complete-data log-likelihood
of the per-channel transition models:

    v_z:   v_k = v_{k-1} + (-g + F_{k-1} r_{k-1} / m) dt + noise
    omega: w_k = w_{k-1} + dt/I_a (M_a + (I_b - I_c) w_b w_c) + noise

where r = R[2][2] = cos(phi) cos(theta). The attitude sequence feeding r and
the thrust direction is whatever the observation source provides: filtered
estimates, measured Euler angles, or zeros when the sensor does not observe
attitude at all (the resulting mass bias is a property of that sensor, not
of the estimator).

The inertia update is a Jacobi sweep: each axis uses the previous
iteration's values of the other two.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .dynamics import GimbalLockError
from .estimation import FilterConfig, GaussianBelief, correct, phi_jacobian, predict

_AXES = ((0, 1, 2), (1, 2, 0), (2, 0, 1))  # (a, b, c) index triples


class DegenerateWindowError(RuntimeError):
    """Window carries no usable excitation for one or more parameters.

    values holds the per-component estimates with NaN on the degenerate
    components; mask flags the degenerate ones.
    """

    def __init__(self, msg, values=None, mask=None):
        super().__init__(msg)
        self.values = values
        self.mask = mask


@dataclass
class ThetaEstimate:
    """Current parameter iterate: mass [kg] and inertia diagonal [kg m^2]."""

    mass: float
    inertia: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.mass], self.inertia])

    def rel_change(self, other: "ThetaEstimate") -> float:
        a, b = self.as_array(), other.as_array()
        return float(np.max(np.abs(a - b) / np.abs(b)))


@dataclass
class EmConfig:
    max_iterations: int = 50
    tol: float = 1e-8
    # transition-noise scale of the per-channel models; it cancels in the
    # closed-form M-steps, so it is carried for completeness only
    delta: float = 1.0
    window_size: int = 800
    cadence: int = 4
    rho_min: float = 0.1
    gravity: float = 9.81
    filter_cfg: FilterConfig = field(default_factory=FilterConfig)


@dataclass
class EmRecord:
    """E-step output consumed by the M-steps."""

    vz: np.ndarray       # smoothed vertical velocity, (N,)
    omega: np.ndarray    # smoothed body rates, (N, 3)
    r: np.ndarray        # R[2][2] along the source attitude, (N,)
    thrust: np.ndarray   # applied collective thrust, (N,)
    torque: np.ndarray   # applied body torque, (N, 3)
    dt: float


@dataclass
class EstimateTrace:
    estimates: list
    converged: bool
    flagged_iterations: list


def thrust_axis_world(attitude) -> np.ndarray:
    """Third column of R for an (N, 3) attitude sequence, vectorized."""
    att = np.atleast_2d(np.asarray(attitude, dtype=float))
    cf, sf = np.cos(att[:, 0]), np.sin(att[:, 0])
    ct, st = np.cos(att[:, 1]), np.sin(att[:, 1])
    cy, sy = np.cos(att[:, 2]), np.sin(att[:, 2])
    return np.stack(
        [cy * st * cf + sy * sf, sy * st * cf - cy * sf, ct * cf], axis=1
    )


def _reference_pass(ys, hd, fseq, x0, cfg: FilterConfig):
    """Numpy EKF/RTS pass mirroring the compiled kernel (reference path)."""
    from .estimation import rts_smooth

    N = ys.shape[0]
    H = np.diag(hd)
    init = GaussianBelief(x0.copy(), cfg.p0.copy())
    # the first observation enters through the init mean, so correcting
    # with it leaves the mean alone and only tightens the covariance
    filtered = [correct(init, ys[0], H, cfg)]
    predicted = [init]
    phis = [np.eye(12)]
    for k in range(1, N):
        phis.append(phi_jacobian(filtered[-1].mean, cfg.dt))
        pred = predict(filtered[-1], fseq[k - 1], cfg)
        predicted.append(pred)
        filtered.append(correct(pred, ys[k], H, cfg))
    smoothed = rts_smooth(filtered, predicted, phis)
    xs = np.array([b.mean for b in smoothed])
    Ps = np.array([b.cov for b in smoothed])
    return xs, Ps


def e_step(ys, hdiag, thrust, torque, attitude, theta: ThetaEstimate,
           cfg: EmConfig, use_kernel: Optional[bool] = None) -> EmRecord:
    """Smooth the window under the current parameter iterate.

    Args:
        ys: (N, 12) zero-padded observations.
        hdiag: diagonal of the selector matrix for the source.
        thrust, torque: applied inputs, (N,) and (N, 3); entry k drove the
            transition k -> k+1.
        attitude: (N, 3) attitude sequence from the observation source
            (zeros where the source has none).
        theta: current parameter iterate (mass enters the velocity
            prediction).
        cfg: EM configuration; cfg.filter_cfg supplies Q, R, P0 and dt.
        use_kernel: force the compiled/reference path; default picks the
            compiled kernel when numba is importable.

    Returns:
        EmRecord over the same N steps.

    Raises:
        GimbalLockError: the smoothing pass hit pitch +-pi/2.
    """
    ys = np.asarray(ys, dtype=float)
    thrust = np.asarray(thrust, dtype=float)
    torque = np.asarray(torque, dtype=float)
    attitude = np.asarray(attitude, dtype=float)
    fc = cfg.filter_cfg
    N = ys.shape[0]
    if N == 0:
        raise ValueError("empty observation window")

    zb = thrust_axis_world(attitude)
    fseq = (thrust / theta.mass)[:, None] * zb
    fseq[:, 2] -= cfg.gravity
    r = zb[:, 2]  # cos(phi) cos(theta)

    x0 = ys[0].copy()
    if N == 1:
        xs = x0[None, :]
    else:
        if use_kernel is None:
            use_kernel = _kernels.HAVE_NUMBA
        if use_kernel:
            xs, _, flag = _kernels.ekf_rts_pass(
                ys, np.asarray(hdiag, dtype=float), fseq, x0, fc.p0, fc.q, fc.r,
                fc.dt,
            )
            if flag != 0:
                raise GimbalLockError("smoothing pass reached gimbal lock")
        else:
            xs, _ = _reference_pass(ys, np.asarray(hdiag, dtype=float), fseq, x0, fc)

    return EmRecord(
        vz=xs[:, 5].copy(),
        omega=xs[:, 9:12].copy(),
        r=r,
        thrust=thrust,
        torque=torque,
        dt=fc.dt,
    )


def m_step_mass(record: EmRecord, rho_min: float = 0.1,
                gravity: float = 9.81) -> float:
    """Closed-form mass update.

    m = sum (r F)^2 dt / sum (r F) (g dt + dv), sums over consecutive
    pairs. Raises DegenerateWindowError when the window has no thrust
    excitation or the denominator is non-positive / noise-dominated
    (cosine similarity between regressor and response below rho_min).
    """
    dt = record.dt
    a = record.r[:-1] * record.thrust[:-1]
    b = gravity * dt + np.diff(record.vz)
    num = float(np.sum(a * a) * dt)
    den = float(np.sum(a * b))
    scale = float(np.linalg.norm(a) * np.linalg.norm(b))
    rho = den / scale if scale > 0 else 0.0
    if not np.isfinite(den) or den <= 0.0 or rho < rho_min:
        raise DegenerateWindowError(
            f"mass window degenerate: den={den:g} rho={rho:g}",
            values=np.nan,
            mask=np.array([True]),
        )
    return num / den


def m_step_inertia(record: EmRecord, inertia_prev, rho_min: float = 0.1) -> np.ndarray:
    """Closed-form inertia update, one Jacobi sweep.

    For each axis a with cyclic pair (b, c):

        I_a = sum (M_a + (I_b - I_c) w_b w_c)^2 dt
              / sum (w_a[k] - w_a[k-1]) (M_a + (I_b - I_c) w_b w_c)

    with the bracket evaluated at step k-1 and the previous iterate's
    inertia. Raises DegenerateWindowError carrying per-axis values (NaN on
    degenerate axes) and the degeneracy mask.
    """
    inertia_prev = np.asarray(inertia_prev, dtype=float)
    dt = record.dt
    w = record.omega
    out = np.empty(3)
    mask = np.zeros(3, dtype=bool)
    for a, bx, cx in _AXES:
        bracket = record.torque[:-1, a] + (
            inertia_prev[bx] - inertia_prev[cx]
        ) * w[:-1, bx] * w[:-1, cx]
        dw = np.diff(w[:, a])
        num = float(np.sum(bracket * bracket) * dt)
        den = float(np.sum(dw * bracket))
        scale = float(np.linalg.norm(bracket) * np.linalg.norm(dw))
        rho = den / scale if scale > 0 else 0.0
        if not np.isfinite(den) or den <= 0.0 or rho < rho_min:
            out[a] = np.nan
            mask[a] = True
        else:
            out[a] = num / den
    if np.any(mask):
        raise DegenerateWindowError(
            f"inertia axes {np.flatnonzero(mask).tolist()} degenerate",
            values=out,
            mask=mask,
        )
    return out


def _guarded_update(record: EmRecord, theta: ThetaEstimate, cfg: EmConfig):
    """One M-step with positivity/degeneracy guards; returns (theta', flagged)."""
    flagged = False
    try:
        mass = m_step_mass(record, cfg.rho_min, cfg.gravity)
    except DegenerateWindowError:
        mass = theta.mass
        flagged = True
    if not np.isfinite(mass) or mass <= 0.0:
        mass = theta.mass
        flagged = True

    try:
        inertia = m_step_inertia(record, theta.inertia, cfg.rho_min)
    except DegenerateWindowError as err:
        inertia = np.where(err.mask, theta.inertia, err.values)
        flagged = True
    bad = ~np.isfinite(inertia) | (inertia <= 0.0)
    if np.any(bad):
        inertia = np.where(bad, theta.inertia, inertia)
        flagged = True
    return ThetaEstimate(mass, inertia, theta.iteration + 1), flagged


def em_offline(ys, hdiag, thrust, torque, attitude, theta0: ThetaEstimate,
               cfg: EmConfig, use_kernel: Optional[bool] = None) -> EstimateTrace:
    """Batch EM: alternate E-step and M-steps until the iterate settles.

    Returns an EstimateTrace whose first entry is theta0; converged is True
    when the relative parameter change dropped below cfg.tol within
    cfg.max_iterations.
    """
    theta = ThetaEstimate(theta0.mass, theta0.inertia.copy(), 0)
    trace = [theta]
    flagged = []
    converged = False
    for it in range(1, cfg.max_iterations + 1):
        record = e_step(ys, hdiag, thrust, torque, attitude, theta, cfg, use_kernel)
        theta_next, was_flagged = _guarded_update(record, theta, cfg)
        trace.append(theta_next)
        if was_flagged:
            flagged.append(it)
        if theta_next.rel_change(theta) < cfg.tol:
            theta = theta_next
            converged = True
            break
        theta = theta_next
    return EstimateTrace(estimates=trace, converged=converged,
                         flagged_iterations=flagged)


def em_online_tick(ys, hdiag, thrust, torque, attitude, theta_prev: ThetaEstimate,
                   cfg: EmConfig, use_kernel: Optional[bool] = None) -> ThetaEstimate:
    """One warm-started EM iteration on the current window.

    Runs a single E-step/M-step pair from the previous estimate; degenerate
    or non-positive components retain their previous values, so an
    unexcited window (say, pure hover for the inertia axes) simply carries
    the estimate forward.
    """
    ys = np.asarray(ys, dtype=float)
    if ys.shape[0] < 2:
        raise ValueError("online window needs at least two observations")
    record = e_step(ys, hdiag, thrust, torque, attitude, theta_prev, cfg, use_kernel)
    theta_next, _ = _guarded_update(record, theta_prev, cfg)
    return theta_next
