import numpy as np
import pytest
from numpy.testing import assert_allclose

from quadem._kernels import HAVE_NUMBA, ekf_rts_pass
from quadem.dynamics import GimbalLockError
from quadem.em import EmConfig, ThetaEstimate, e_step
from quadem.estimation import FilterConfig
from quadem.sensors import KIND_A, KIND_B, KIND_C, measurement_diag

from test_em import simulate


def _noisy_inputs(n=250, seed=9):
    rng = np.random.default_rng(seed)
    xs, Fs, Ms = simulate(n, m_amp=4e-4)
    ys = xs + 0.01 * rng.standard_normal(xs.shape)
    att = xs[:, 6:9] + 0.01 * rng.standard_normal((n, 3))
    return ys, Fs, Ms, att


@pytest.mark.parametrize("kind", [KIND_A, KIND_B, KIND_C])
def test_kernel_matches_reference_path(kind):
    ys, Fs, Ms, att = _noisy_inputs()
    hd = measurement_diag(kind)
    ys = hd * ys
    theta = ThetaEstimate(0.17, [2.4e-4, 3.0e-4, 2.1e-4])
    cfg = EmConfig()
    fast = e_step(ys, hd, Fs, Ms, att, theta, cfg, use_kernel=True)
    ref = e_step(ys, hd, Fs, Ms, att, theta, cfg, use_kernel=False)
    assert_allclose(fast.vz, ref.vz, atol=1e-9)
    assert_allclose(fast.omega, ref.omega, atol=1e-9)
    assert_allclose(fast.r, ref.r, rtol=0, atol=0)


def test_kernel_matches_reference_with_nondefault_filter():
    ys, Fs, Ms, att = _noisy_inputs(seed=17)
    hd = measurement_diag(KIND_C)
    ys = hd * ys
    fc = FilterConfig(
        q=np.diag(np.linspace(0.01, 0.2, 12)),
        r=np.diag(np.linspace(0.001, 0.05, 12)),
        p0=2.0 * np.eye(12),
    )
    theta = ThetaEstimate(0.18, [2.5e-4, 3.1e-4, 2.0e-4])
    cfg = EmConfig(filter_cfg=fc)
    fast = e_step(ys, hd, Fs, Ms, att, theta, cfg, use_kernel=True)
    ref = e_step(ys, hd, Fs, Ms, att, theta, cfg, use_kernel=False)
    assert_allclose(fast.vz, ref.vz, atol=1e-9)
    assert_allclose(fast.omega, ref.omega, atol=1e-9)


def test_kernel_flags_gimbal_lock():
    # a window whose first observation sits at pi/2 pitch puts the filter
    # mean on the singularity; both paths must refuse to smooth it
    n = 20
    ys = np.zeros((n, 12))
    ys[0, 7] = np.pi / 2
    hd = measurement_diag(KIND_B)
    theta = ThetaEstimate(0.18, [2.5e-4, 3.1e-4, 2.0e-4])
    cfg = EmConfig()
    for use_kernel in (True, False):
        with pytest.raises(GimbalLockError):
            e_step(
                ys, hd, np.ones(n), np.zeros((n, 3)), np.zeros((n, 3)), theta, cfg,
                use_kernel=use_kernel,
            )


def test_numba_available_and_used_by_default():
    # the campaign runtimes in the acceptance suite assume the compiled path
    assert HAVE_NUMBA
    out = ekf_rts_pass(
        np.zeros((3, 12)),
        np.ones(12),
        np.zeros((3, 3)),
        np.zeros(12),
        np.eye(12),
        0.0707 * np.eye(12),
        0.00707 * np.eye(12),
        0.01,
    )
    assert out[2] == 0
    assert out[0].shape == (3, 12)
