"""Compiled EKF/RTS pass for the EM inner loop.

The online estimator re-smooths a sliding window every few steps, which makes
the filter pass the hot loop of the whole pipeline. This module carries a
numba translation of the reference implementation in estimation.py,
restricted to the diagonal selector matrices the pipeline actually uses.
Equivalence against the reference path is pinned by tests; if numba is
unavailable the plain-python fallback (same code, undecorated) keeps the
package functional.
"""

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def ekf_rts_pass(ys, hd, fseq, x0, P0, Q, R, dt):
    """Forward EKF + backward RTS over a window.

    ys: (N, 12) zero-padded observations; hd: diagonal of the selector;
    fseq: (N, 3) exogenous acceleration inputs (fseq[k] drives k -> k+1);
    x0, P0: initial belief. The measurement update runs at every step
    including k = 0; with x0 taken from ys[0] the first residual vanishes,
    so the update only settles the initial covariance onto the measured
    channels.

    Returns (xs, Ps, ok): smoothed means and covariances, ok = 0 on
    success, 1 if a gimbal singularity interrupted the forward pass.
    """
    N = ys.shape[0]
    n = 12
    eye = np.eye(n)

    x_post = np.empty((N, n))
    P_post = np.empty((N, n, n))
    x_pred = np.empty((N, n))
    P_pred = np.empty((N, n, n))
    phis = np.empty((N, n, n))

    x_pred[0] = x0
    P_pred[0] = P0
    phis[0] = eye

    for k in range(N):
        if k > 0:
            xm = x_post[k - 1]
            cf = np.cos(xm[6])
            sf = np.sin(xm[6])
            ct = np.cos(xm[7])
            st = np.sin(xm[7])
            if np.abs(ct) < 1e-6:
                return x_post, P_post, 1
            tt = st / ct
            sec2 = 1.0 / (ct * ct)
            wx, wy, wz = xm[9], xm[10], xm[11]

            # prediction mean map
            xp = x_pred[k]
            xp[0] = xm[0] + dt * xm[3]
            xp[1] = xm[1] + dt * xm[4]
            xp[2] = xm[2] + dt * xm[5]
            xp[3] = xm[3] + dt * fseq[k - 1, 0]
            xp[4] = xm[4] + dt * fseq[k - 1, 1]
            xp[5] = xm[5] + dt * fseq[k - 1, 2]
            xp[6] = xm[6] + dt * (wx + sf * tt * wy + cf * tt * wz)
            xp[7] = xm[7] + dt * (cf * wy - sf * wz)
            xp[8] = xm[8] + dt * ((sf * wy + cf * wz) / ct)
            xp[9] = wx
            xp[10] = wy
            xp[11] = wz

            # exact Jacobian of the map
            F = phis[k]
            F[:] = 0.0
            for i in range(n):
                F[i, i] = 1.0
            F[0, 3] = dt
            F[1, 4] = dt
            F[2, 5] = dt
            F[6, 6] = 1.0 + dt * (cf * tt * wy - sf * tt * wz)
            F[6, 7] = dt * (sf * sec2 * wy + cf * sec2 * wz)
            F[6, 9] = dt
            F[6, 10] = dt * sf * tt
            F[6, 11] = dt * cf * tt
            F[7, 6] = dt * (-sf * wy - cf * wz)
            F[7, 10] = dt * cf
            F[7, 11] = -dt * sf
            F[8, 6] = dt * (cf * wy - sf * wz) / ct
            F[8, 7] = dt * (sf * wy + cf * wz) * st * sec2
            F[8, 10] = dt * sf / ct
            F[8, 11] = dt * cf / ct

            Pp = F @ P_post[k - 1] @ F.T + Q
            Pp = 0.5 * (Pp + Pp.T)
            P_pred[k] = Pp
        xp = x_pred[k]
        Pp = P_pred[k]

        # correction: S = H Pp H' + R with diagonal H
        S = np.empty((n, n))
        HP = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                S[i, j] = hd[i] * Pp[i, j] * hd[j] + R[i, j]
                HP[i, j] = hd[i] * Pp[i, j]
        K = np.linalg.solve(S, HP).T

        resid = np.empty(n)
        for i in range(n):
            resid[i] = ys[k, i] - hd[i] * xp[i]
        x_post[k] = xp + K @ resid

        IKH = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                IKH[i, j] = eye[i, j] - K[i, j] * hd[j]
        Po = IKH @ Pp @ IKH.T + K @ R @ K.T
        P_post[k] = 0.5 * (Po + Po.T)

    # backward pass
    xs = np.empty((N, n))
    Ps = np.empty((N, n, n))
    xs[N - 1] = x_post[N - 1]
    Ps[N - 1] = P_post[N - 1]
    for k in range(N - 2, -1, -1):
        C = np.linalg.solve(P_pred[k + 1], phis[k + 1] @ P_post[k]).T
        xs[k] = x_post[k] + C @ (xs[k + 1] - x_pred[k + 1])
        Pk = P_post[k] + C @ (Ps[k + 1] - P_pred[k + 1]) @ C.T
        Ps[k] = 0.5 * (Pk + Pk.T)
    return xs, Ps, 0
