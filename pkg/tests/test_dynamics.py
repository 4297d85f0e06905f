import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from quadem.dynamics import (
    ControlInput,
    GimbalLockError,
    ProcessNoiseSpec,
    QuadParams,
    drift,
    euler_rate_matrix,
    euler_rate_matrix_inv,
    noise_matrix,
    rotation_body_to_earth,
    step_sde,
)


def test_rotation_identity_at_zero():
    assert_allclose(rotation_body_to_earth([0.0, 0.0, 0.0]), np.eye(3), atol=1e-15)


def test_rotation_yaw_quarter_turn():
    # psi = pi/2 maps body x onto earth y
    R = rotation_body_to_earth([0.0, 0.0, np.pi / 2])
    assert_allclose(R @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)


def test_rotation_matches_scipy_zyx():
    rng = np.random.default_rng(11)
    for _ in range(200):
        phi, theta, psi = rng.uniform(-np.pi, np.pi, 3)
        R = rotation_body_to_earth([phi, theta, psi])
        R_ref = Rotation.from_euler("ZYX", [psi, theta, phi]).as_matrix()
        assert_allclose(R, R_ref, atol=1e-13)


def test_rotation_orthonormal():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        R = rotation_body_to_earth(rng.uniform(-np.pi, np.pi, 3))
        assert_allclose(R.T @ R, np.eye(3), atol=1e-13)
        assert_allclose(np.linalg.det(R), 1.0, atol=1e-13)


def test_euler_rate_matrix_inverse_pair():
    rng = np.random.default_rng(3)
    for _ in range(500):
        e = rng.uniform([-np.pi, -1.4, -np.pi], [np.pi, 1.4, np.pi])
        E = euler_rate_matrix(e)
        Einv = euler_rate_matrix_inv(e)
        assert_allclose(Einv @ E, np.eye(3), atol=1e-10)


def test_euler_rate_matrix_against_rotation_derivative():
    # omega_body^ = R^T dR/dt; integrate euler angles along a random rate
    # and compare the central difference against E @ euler_dot.
    rng = np.random.default_rng(17)
    h = 1e-6
    for _ in range(100):
        e = rng.uniform([-1.0, -1.0, -np.pi], [1.0, 1.0, np.pi])
        edot = rng.uniform(-2.0, 2.0, 3)
        Rp = rotation_body_to_earth(e + h * edot)
        Rm = rotation_body_to_earth(e - h * edot)
        W = rotation_body_to_earth(e).T @ ((Rp - Rm) / (2 * h))
        omega_fd = np.array([W[2, 1], W[0, 2], W[1, 0]])
        assert_allclose(euler_rate_matrix(e) @ edot, omega_fd, atol=1e-7)


def test_gimbal_lock_raises():
    with pytest.raises(GimbalLockError):
        euler_rate_matrix_inv([0.1, np.pi / 2, 0.0])


def test_negative_noise_sigma_rejected():
    with pytest.raises(ValueError):
        ProcessNoiseSpec(sigma_thrust=-0.01)
    with pytest.raises(ValueError):
        ProcessNoiseSpec(sigma_torque=-1e-6)
    assert ProcessNoiseSpec(0.0, 0.0).stds().tolist() == [0.0] * 4


def test_drift_hover_is_zero():
    p = QuadParams()
    x = np.zeros(12)
    u = ControlInput(thrust=p.mass * p.gravity, torque=np.zeros(3))
    assert_allclose(drift(x, u, p), np.zeros(12), atol=1e-15)


def test_drift_free_fall_gyroscopic():
    # zero input, omega = (1, 2, 3): omega_dot = -I^-1 (omega x I omega)
    p = QuadParams()
    x = np.zeros(12)
    x[9:12] = [1.0, 2.0, 3.0]
    f = drift(x, ControlInput(0.0, np.zeros(3)), p)
    assert_allclose(f[3:6], [0.0, 0.0, -9.81])
    assert_allclose(f[6:9], [1.0, 2.0, 3.0])  # E^-1 is identity at zero attitude
    assert_allclose(f[9:12], [2.64, -0.15e-3 / 3.1e-4, -0.6], rtol=1e-12)


def test_rotational_energy_conserved_without_torque():
    # omega^T I omega_dot = 0 identically when M = 0
    p = QuadParams()
    rng = np.random.default_rng(23)
    for _ in range(300):
        x = np.zeros(12)
        x[6:9] = rng.uniform(-1.0, 1.0, 3)
        x[9:12] = rng.uniform(-5.0, 5.0, 3)
        f = drift(x, ControlInput(rng.uniform(0, 3), np.zeros(3)), p)
        power = x[9:12] @ (p.inertia * f[9:12])
        assert abs(power) < 1e-12, f"gyroscopic term injected power {power}"


def test_noise_matrix_structure():
    p = QuadParams()
    x = np.zeros(12)
    x[6:9] = [0.2, -0.3, 1.0]
    G = noise_matrix(x, p)
    assert G.shape == (12, 4)
    assert_allclose(G[0:3], 0.0)
    assert_allclose(G[6:9], 0.0)
    R = rotation_body_to_earth(x[6:9])
    assert_allclose(G[3:6, 0], R[:, 2] / p.mass)
    assert_allclose(G[3:6, 1:], 0.0)
    assert_allclose(G[9:12, 0], 0.0)
    assert_allclose(np.diag(G[9:12, 1:]), 1.0 / p.inertia)


def test_step_deterministic_without_rng():
    p = QuadParams()
    u = ControlInput(1.9, np.array([1e-4, -2e-4, 5e-5]))
    x = np.zeros(12)
    x[3:6] = [0.5, -0.2, 0.1]
    x[6:9] = [0.05, 0.1, -0.4]
    got = step_sde(x, u, p, ProcessNoiseSpec(), 0.01, rng=None)
    assert_allclose(got, x + drift(x, u, p) * 0.01, rtol=1e-15)


def test_step_zero_sigma_equals_deterministic():
    p = QuadParams()
    u = ControlInput(1.7, np.zeros(3))
    x = np.zeros(12)
    spec = ProcessNoiseSpec(sigma_thrust=0.0, sigma_torque=0.0)
    got = step_sde(x, u, p, spec, 0.01, rng=np.random.default_rng(0))
    assert_allclose(got, step_sde(x, u, p, spec, 0.01, rng=None), atol=1e-16)


def test_step_reproducible_per_seed():
    p = QuadParams()
    u = ControlInput(1.8, np.array([1e-5, 0.0, -1e-5]))
    x = np.zeros(12)
    a = step_sde(x, u, p, ProcessNoiseSpec(), 0.01, rng=np.random.default_rng(42))
    b = step_sde(x, u, p, ProcessNoiseSpec(), 0.01, rng=np.random.default_rng(42))
    c = step_sde(x, u, p, ProcessNoiseSpec(), 0.01, rng=np.random.default_rng(43))
    assert_allclose(a, b, rtol=0, atol=0)
    assert np.any(a != c)


def test_constant_thrust_kinematics_closed_form():
    # level attitude, no torque: velocity and position follow the explicit
    # Euler recursion for constant acceleration a = (F/m - g) e3
    p = QuadParams()
    F = 2.0
    a = F / p.mass - p.gravity
    dt = 0.01
    u = ControlInput(F, np.zeros(3))
    x = np.zeros(12)
    n = 250
    for _ in range(n):
        x = step_sde(x, u, p, ProcessNoiseSpec(), dt, rng=None)
    assert_allclose(x[5], n * dt * a, rtol=1e-12)
    assert_allclose(x[2], a * dt * dt * n * (n - 1) / 2, rtol=1e-12)
    assert_allclose(x[[0, 1, 3, 4]], 0.0, atol=1e-15)
    assert_allclose(x[6:12], 0.0, atol=1e-15)


def test_step_noise_statistics():
    p = QuadParams()
    spec = ProcessNoiseSpec(sigma_thrust=0.02, sigma_torque=1e-5)
    u = ControlInput(p.mass * p.gravity, np.zeros(3))
    x = np.zeros(12)
    dt = 0.01
    rng = np.random.default_rng(99)
    steps = np.array([step_sde(x, u, p, spec, dt, rng=rng) for _ in range(4000)])
    dvz = steps[:, 5]
    dwx = steps[:, 9]
    assert abs(dvz.mean()) < 3 * 0.0111 / np.sqrt(4000)
    assert_allclose(dvz.std(), spec.sigma_thrust / p.mass * np.sqrt(dt), rtol=0.05)
    assert_allclose(dwx.std(), spec.sigma_torque / p.inertia[0] * np.sqrt(dt), rtol=0.05)
    assert_allclose(steps[:, 0:3], 0.0, atol=1e-15)  # no noise on position rows
