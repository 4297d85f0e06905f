import dataclasses
import math
from types import SimpleNamespace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from quadem.dynamics import ProcessNoiseSpec, QuadParams
from quadem.em import EmConfig, ThetaEstimate
from quadem.estimation import FilterConfig
from quadem.harness import (
    ControllerConfig,
    MissionSpec,
    default_theta0,
    run_campaign,
    run_offline,
    run_online,
    summarize_campaign,
)
from quadem.sensors import SensorNoiseSpec

TRUE_PARAMS = QuadParams()
TRUE_THETA = ThetaEstimate(TRUE_PARAMS.mass, TRUE_PARAMS.inertia.copy())

# Two-leg course used where the full five-waypoint mission would be slow.
SHORT_MISSION = MissionSpec(waypoints=np.array([[4.0, 3.0, 3.0],
                                                [3.0, 5.0, 4.0]]),
                            max_steps=6000)

NEVER = EmConfig(cadence=math.inf)


def test_mission_spec_validation():
    """Invariants: at least one waypoint, positive radius/steps/dt."""
    with pytest.raises(ValueError, match="waypoints"):
        MissionSpec(waypoints=np.zeros((0, 3)))
    with pytest.raises(ValueError, match="waypoints"):
        MissionSpec(waypoints=np.zeros((3, 2)))
    with pytest.raises(ValueError, match="arrival_radius"):
        MissionSpec(arrival_radius=0.0)
    with pytest.raises(ValueError, match="max_steps"):
        MissionSpec(max_steps=0)
    with pytest.raises(ValueError, match="dt"):
        MissionSpec(dt=-0.01)
    with pytest.raises(ValueError, match="start"):
        MissionSpec(start=np.zeros(4))


def test_controller_config_validation():
    with pytest.raises(ValueError, match="pd gains"):
        ControllerConfig(kp=0.0)
    with pytest.raises(ValueError, match="pd gains"):
        ControllerConfig(kd=-1.0)
    with pytest.raises(ValueError, match="accel_limit"):
        ControllerConfig(accel_limit=0.0)
    with pytest.raises(ValueError, match="yaw_rate_limit"):
        ControllerConfig(yaw_rate_limit=0.0)
    with pytest.raises(ValueError, match="q_diag"):
        ControllerConfig(q_diag=np.ones(11))
    with pytest.raises(ValueError, match="r_diag"):
        ControllerConfig(r_diag=-np.ones(6))


def test_default_theta0_matches_campaign_settings():
    th = default_theta0()
    assert th.mass == 0.001, f"identification starts at 0.001 kg, got {th.mass}"
    assert_allclose(th.inertia, [1.0e-4, 2.0e-4, 1.0e-4],
                    err_msg="default inertia start")


def test_run_record_alignment_validation():
    rec = run_offline(SHORT_MISSION, "ekf", TRUE_PARAMS, default_theta0(),
                      EmConfig(max_iterations=2), seed=11)
    with pytest.raises(ValueError, match="observations"):
        dataclasses.replace(rec, observations=rec.observations[:-1])
    with pytest.raises(ValueError, match="thrust"):
        dataclasses.replace(rec, thrust=rec.thrust[:-2])


def test_unknown_source_rejected():
    with pytest.raises(ValueError, match="source"):
        run_offline(SHORT_MISSION, "imu", TRUE_PARAMS, default_theta0(),
                    EmConfig(), seed=0)


def test_mismatched_dt_rejected():
    cfg = EmConfig()
    bad = MissionSpec(waypoints=SHORT_MISSION.waypoints, dt=0.02)
    with pytest.raises(ValueError, match="dt"):
        run_offline(bad, "ekf", TRUE_PARAMS, default_theta0(), cfg, seed=0)


def test_offline_replay_determinism():
    """Same seed and config must reproduce the record bit for bit."""
    cfg = EmConfig(max_iterations=8)
    a = run_offline(SHORT_MISSION, "ekf", TRUE_PARAMS, default_theta0(),
                    cfg, seed=7)
    b = run_offline(SHORT_MISSION, "ekf", TRUE_PARAMS, default_theta0(),
                    cfg, seed=7)
    for name in ("states", "observations", "estimates", "thrust", "torque",
                 "pos_err", "euler_err", "waypoint_miss",
                 "rmse_filtered", "rmse_smoothed"):
        xa, xb = getattr(a, name), getattr(b, name)
        assert np.array_equal(xa, xb), f"{name} differs between replays"
    assert [e.mass for e in a.trace.estimates] == \
        [e.mass for e in b.trace.estimates], "EM mass trace differs"
    assert a.capture_steps == b.capture_steps
    c = run_offline(SHORT_MISSION, "ekf", TRUE_PARAMS, default_theta0(),
                    cfg, seed=8)
    assert not np.array_equal(a.states, c.states), \
        "different seeds should give different realizations"


def test_online_replay_determinism():
    cfg = EmConfig(window_size=300, cadence=10)
    a = run_online(SHORT_MISSION, "ekf", TRUE_PARAMS, default_theta0(),
                   cfg, seed=5)
    b = run_online(SHORT_MISSION, "ekf", TRUE_PARAMS, default_theta0(),
                   cfg, seed=5)
    assert np.array_equal(a.states, b.states), "online states differ"
    assert np.array_equal(a.estimates, b.estimates), "online estimates differ"
    assert a.tick_windows == b.tick_windows
    assert [e.mass for e in a.trace.estimates] == \
        [e.mass for e in b.trace.estimates], "online mass trace differs"


def test_online_never_ticking_reduces_to_offline_flight():
    """Shared plant/sensor path: an online run that never estimates must
    retrace the known-parameter flight exactly (infinite cadence, true
    theta0)."""
    off = run_offline(SHORT_MISSION, "ekf", TRUE_PARAMS, TRUE_THETA,
                      EmConfig(max_iterations=1), seed=13)
    on = run_online(SHORT_MISSION, "ekf", TRUE_PARAMS, TRUE_THETA,
                    NEVER, seed=13)
    assert on.tick_windows == [], "infinite cadence must never tick"
    assert len(on.trace.estimates) == 1, "trace holds only theta0"
    for name in ("states", "observations", "estimates", "thrust", "torque"):
        assert np.array_equal(getattr(off, name), getattr(on, name)), \
            f"{name}: online(cadence=inf) deviates from offline flight"


def test_sensor_kind_does_not_perturb_noise_streams():
    """Seed fan-out: the same seed must reuse the same plant and sensor
    noise realizations under every sensor package.

    With sensor noise on, the packages see the same noise on their shared
    position channels at the first step (the state is still common there).
    With sensor noise off, the at-rest start gives every package the same
    initial belief and control, so the first transition isolates the
    plant draw: it must be bitwise common. Later steps legitimately
    separate through kind-specific prediction feedback.
    """
    recs = {src: run_offline(SHORT_MISSION, src, TRUE_PARAMS, TRUE_THETA,
                             EmConfig(max_iterations=1), seed=21)
            for src in ("ekf", "full", "partial")}
    for src in ("full", "partial"):
        assert np.array_equal(recs[src].observations[0, 0:3],
                              recs["ekf"].observations[0, 0:3]), \
            f"{src}: position noise at step 0 should be stream-identical"

    quiet = SensorNoiseSpec(0.0, 0.0, 0.0, 0.0, 0.0)
    clean = {src: run_offline(SHORT_MISSION, src, TRUE_PARAMS, TRUE_THETA,
                              EmConfig(max_iterations=1), seed=21,
                              sensor_noise=quiet)
             for src in ("ekf", "full", "partial")}
    for src in ("full", "partial"):
        assert np.array_equal(clean[src].states[1], clean["ekf"].states[1]), \
            f"{src}: first plant transition should be bitwise common"
    assert np.abs(clean["ekf"].states[1, 9:12]).max() > 1e-4, \
        "process noise should be visible in the first transition"


def test_offline_mission_flies_through_waypoints():
    """Default course, position+gyro package: all five gates captured and
    the true trajectory approaches each waypoint closely."""
    rec = run_offline(MissionSpec(), "ekf", TRUE_PARAMS, default_theta0(),
                      EmConfig(), seed=0)
    assert rec.completed, "mission should complete within max_steps"
    assert not rec.diverged
    assert len(rec.capture_steps) == 5
    assert rec.capture_steps == sorted(rec.capture_steps)
    assert rec.waypoint_miss.shape == (5,)
    assert rec.waypoint_miss.max() < 0.15, \
        f"worst true approach {rec.waypoint_miss.max():.3f} m"
    assert rec.trace.converged, "offline EM should converge on a full record"
    final = rec.trace.estimates[-1]
    assert abs(final.mass - 0.18) < 0.01, f"mass estimate {final.mass:.4f}"


def test_noiseless_flight_is_tracked_exactly():
    """Zero process and sensor noise: the full-observation database holds
    the exact trajectory, the in-the-loop filter pins the measured-exact
    blocks, and post-hoc identification is algebraically exact.

    Zero noise includes the modeled measurement noise: with a tight R the
    posterior pins the exact data, which is what makes the M-step ratio
    formulas algebraically exact. The campaign default R stays deliberately
    mismatched and is exercised by the noisy runs instead.
    """
    tight = EmConfig(filter_cfg=FilterConfig(r=1e-12 * np.eye(12)))
    rec = run_offline(SHORT_MISSION, "full", TRUE_PARAMS, default_theta0(),
                      tight, seed=3,
                      process_noise=ProcessNoiseSpec(0.0, 0.0),
                      sensor_noise=SensorNoiseSpec(0.0, 0.0, 0.0, 0.0, 0.0))
    assert rec.completed
    assert np.array_equal(rec.observations, rec.states), \
        "noiseless full observations should equal the trajectory"
    assert rec.pos_err.max() < 1e-8, \
        f"noiseless position error {rec.pos_err.max():.2e}"
    assert rec.euler_err.max() < 1e-2, \
        f"noiseless euler error {rec.euler_err.max():.2e}"
    final = rec.trace.estimates[-1]
    assert abs(final.mass - TRUE_PARAMS.mass) / TRUE_PARAMS.mass < 1e-6
    assert_allclose(final.inertia, TRUE_PARAMS.inertia, rtol=1e-6,
                    err_msg="noiseless inertia recovery")
    hit = [e for e in rec.trace.estimates
           if abs(e.mass - TRUE_PARAMS.mass) / TRUE_PARAMS.mass < 1e-6
           and np.all(np.abs(e.inertia - TRUE_PARAMS.inertia)
                      / TRUE_PARAMS.inertia < 1e-6)]
    assert hit and hit[0].iteration <= 5, \
        "noiseless recovery should need at most five iterations"


def test_online_window_semantics():
    """Each tick sees exactly min(steps so far, window_size) observations."""
    cfg = EmConfig(window_size=120, cadence=9)
    rec = run_online(SHORT_MISSION, "ekf", TRUE_PARAMS, default_theta0(),
                     cfg, seed=2)
    assert rec.tick_windows, "expected at least one estimator tick"
    for step, length in rec.tick_windows:
        assert step % 9 == 0
        assert length == min(step + 1, 120), \
            f"tick at step {step} saw {length} rows"
    before = [w for w in rec.tick_windows if w[0] + 1 < 120]
    after = [w for w in rec.tick_windows if w[0] + 1 >= 120]
    assert before and after, "course should straddle the window boundary"
    steps = [s for s, _ in rec.tick_windows]
    assert steps == sorted(steps)
    assert len(rec.trace.estimates) == 1 + len(rec.tick_windows)


def test_online_full_mission_converges():
    """Bootstrap from the deliberately poor start on the default course."""
    rec = run_online(MissionSpec(), "ekf", TRUE_PARAMS, default_theta0(),
                     EmConfig(), seed=0)
    assert rec.completed and not rec.diverged
    final = rec.trace.estimates[-1]
    assert 0.170 < final.mass < 0.190, f"online mass {final.mass:.4f}"
    masses = [e.mass for e in rec.trace.estimates]
    assert masses[0] == 0.001
    assert abs(masses[3] - 0.18) < 0.15, \
        "mass should leave the poor start within a few ticks"


def test_online_divergence_guard_triggers():
    """A never-correcting controller with a 180x-too-small mass free-falls;
    the guard must abort and record the divergence instead of running to
    the step limit."""
    mission = MissionSpec(waypoints=np.array([[4.0, 3.0, 3.0]]),
                          max_steps=4000)
    rec = run_online(mission, "ekf", TRUE_PARAMS, default_theta0(),
                     NEVER, seed=1)
    assert rec.diverged, "free fall should trip the divergence guard"
    assert not rec.completed
    assert rec.states.shape[0] < 4001, "guard should abort before timeout"
    assert np.linalg.norm(rec.states[-1, 0:3]) > 1.0e3
    assert np.all(np.isfinite(rec.states)), "recorded rows stay finite"


def test_timeout_recorded_not_raised():
    mission = MissionSpec(waypoints=np.array([[40.0, 30.0, 30.0]]),
                          max_steps=200)
    rec = run_offline(mission, "ekf", TRUE_PARAMS, default_theta0(),
                      EmConfig(max_iterations=3), seed=4)
    assert not rec.completed and not rec.diverged
    assert rec.states.shape[0] == 201, "timeout keeps the full record"
    assert rec.capture_steps == []
    assert np.isfinite(rec.waypoint_miss).all()


def test_summarize_single_run_point_range():
    rec = run_offline(SHORT_MISSION, "ekf", TRUE_PARAMS, default_theta0(),
                      EmConfig(max_iterations=4), seed=9)
    s = summarize_campaign([rec])
    assert s.n_runs == 1
    assert s.mass_min == s.mass_max, "single run gives a point range"
    assert np.array_equal(s.inertia_min, s.inertia_max)
    assert s.pos_err_max >= s.pos_err_mean >= 0.0
    assert s.completed_runs == 1 and s.diverged_runs == 0


def _fake_record(rng):
    mass = rng.uniform(0.1, 0.3)
    inertia = rng.uniform(1e-4, 4e-4, size=3)
    n = rng.integers(5, 40)
    return SimpleNamespace(
        mode="offline", source="ekf",
        trace=SimpleNamespace(
            estimates=[ThetaEstimate(mass, inertia, iteration=3)]),
        pos_err=rng.uniform(0.0, 0.05, size=n),
        euler_err=rng.uniform(0.0, 0.02, size=n),
        rmse_filtered=rng.uniform(0.0, 0.05, size=4),
        rmse_smoothed=rng.uniform(0.0, 0.05, size=4),
        completed=bool(rng.integers(0, 2)),
        diverged=bool(rng.integers(0, 2)),
    )


def test_summarize_ranges_match_sort_oracle():
    """Streaming min/max reduction against an independent sort-based
    oracle on randomized batches."""
    rng = np.random.default_rng(123)
    for trial in range(20):
        records = [_fake_record(rng) for _ in range(rng.integers(1, 8))]
        s = summarize_campaign(records)
        masses = np.sort([r.trace.estimates[-1].mass for r in records])
        inertias = np.sort([r.trace.estimates[-1].inertia for r in records],
                           axis=0)
        assert s.mass_min == masses[0], f"trial {trial}: mass_min"
        assert s.mass_max == masses[-1], f"trial {trial}: mass_max"
        assert_allclose(s.inertia_min, inertias[0], rtol=0, atol=0,
                        err_msg=f"trial {trial}: inertia_min")
        assert_allclose(s.inertia_max, inertias[-1], rtol=0, atol=0,
                        err_msg=f"trial {trial}: inertia_max")
        pos = np.concatenate([r.pos_err for r in records])
        eul = np.concatenate([r.euler_err for r in records])
        assert_allclose([s.pos_err_mean, s.pos_err_std, s.pos_err_max],
                        [pos.mean(), pos.std(), pos.max()], rtol=1e-12,
                        err_msg=f"trial {trial}: position stats")
        assert_allclose([s.euler_err_mean, s.euler_err_std, s.euler_err_max],
                        [eul.mean(), eul.std(), eul.max()], rtol=1e-12,
                        err_msg=f"trial {trial}: euler stats")
        assert s.completed_runs == sum(r.completed for r in records)
        assert s.diverged_runs == sum(r.diverged for r in records)
        assert s.mass_min <= s.mass_max
        assert np.all(s.inertia_min <= s.inertia_max)


def test_summarize_empty_rejected():
    with pytest.raises(ValueError, match="at least one"):
        summarize_campaign([])


def test_run_campaign_matches_direct_calls():
    """The campaign path is a plain fan-out: each record must equal the
    directly produced one bit for bit."""
    cfg = EmConfig(max_iterations=6)
    recs = run_campaign("offline", "ekf", [0, 1], mission=SHORT_MISSION,
                        cfg=cfg)
    assert [r.seed for r in recs] == [0, 1]
    direct = run_offline(SHORT_MISSION, "ekf", TRUE_PARAMS, default_theta0(),
                         cfg, seed=1)
    assert np.array_equal(recs[1].states, direct.states)
    assert np.array_equal(recs[1].estimates, direct.estimates)
    assert [e.mass for e in recs[1].trace.estimates] == \
        [e.mass for e in direct.trace.estimates]


def test_run_campaign_parallel_equals_serial():
    cfg = EmConfig(max_iterations=4)
    serial = run_campaign("offline", "full", [3, 4], mission=SHORT_MISSION,
                          cfg=cfg, workers=1)
    parallel = run_campaign("offline", "full", [3, 4], mission=SHORT_MISSION,
                            cfg=cfg, workers=2)
    for s, p in zip(serial, parallel):
        assert s.seed == p.seed
        assert np.array_equal(s.states, p.states), \
            f"seed {s.seed}: parallel worker changed the trajectory"
        assert s.trace.estimates[-1].mass == p.trace.estimates[-1].mass
