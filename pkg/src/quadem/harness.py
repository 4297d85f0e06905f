"""Mission orchestration: closed-loop waypoint flights, offline and online
identification pipelines, seeded campaigns, and summary statistics.

The offline pipeline flies the course with true parameters, stores every
observation in the run database, and identifies the parameters afterwards
from the stored record. The online pipeline re-estimates the parameters
during flight on a sliding window and feeds each new estimate straight
back into the controller.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .control import (
    DegenerateThrustError,
    FlatInput,
    flat_reference,
    linearized_ab,
    lqg_control,
    lqr_gain,
    recover_thrust_torque,
)
from .dynamics import (
    EUL,
    POS,
    VEL,
    GimbalLockError,
    ProcessNoiseSpec,
    QuadParams,
    rotation_body_to_earth,
    step_sde,
)
from .em import EmConfig, EstimateTrace, ThetaEstimate, em_offline, em_online_tick
from .estimation import (
    FilterConfig,
    GaussianBelief,
    correct,
    phi_jacobian,
    predict,
    rts_smooth,
)
from .sensors import (
    KIND_A,
    KIND_B,
    KIND_C,
    SensorNoiseSpec,
    measurement_diag,
    measurement_matrix,
    observe,
)

SOURCE_EKF = "ekf"
SOURCE_FULL = "full"
SOURCE_PARTIAL = "partial"
SOURCES = (SOURCE_EKF, SOURCE_FULL, SOURCE_PARTIAL)

# observation source -> sensor package carried on the flight
SOURCE_KIND = {SOURCE_EKF: KIND_A, SOURCE_FULL: KIND_B, SOURCE_PARTIAL: KIND_C}

MODE_OFFLINE = "offline"
MODE_ONLINE = "online"
MODES = (MODE_OFFLINE, MODE_ONLINE)

# a flight whose position norm escapes past this is recorded as diverged
DIVERGENCE_GUARD = 1.0e3

_BLOCKS = (slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12))

_DEFAULT_WAYPOINTS = (
    (4.0, 3.0, 3.0),
    (3.0, 5.0, 4.0),
    (6.0, 4.0, 5.0),
    (4.0, 3.0, 4.0),
    (2.0, 1.0, 5.0),
)


@dataclass
class MissionSpec:
    """Waypoint course flown by the closed loop."""

    start: np.ndarray = field(default_factory=lambda: np.array([0.5, 1.0, 0.0]))
    waypoints: np.ndarray = field(
        default_factory=lambda: np.array(_DEFAULT_WAYPOINTS)
    )
    arrival_radius: float = 0.1
    max_steps: int = 20000
    dt: float = 0.01

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float)
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if self.start.shape != (3,):
            raise ValueError("start must be a 3-vector")
        if self.waypoints.ndim != 2 or self.waypoints.shape[1] != 3 \
                or self.waypoints.shape[0] < 1:
            raise ValueError("waypoints must be an (n, 3) array with n >= 1")
        if self.arrival_radius <= 0.0:
            raise ValueError("arrival_radius must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")


@dataclass
class ControllerConfig:
    """Outer-loop shaping, LQR weights, and command limits.

    The default weights put 10 on position and 100 on body rate; the rate
    weight damps the attitude loop (which the rate reference otherwise
    leaves ringing) enough to settle into the arrival radius.
    """

    kp: float = 4.0
    kd: float = 4.0
    accel_limit: float = 4.0
    yaw: float = 0.0
    track_heading: bool = True
    yaw_rate_limit: float = 1.5
    q_diag: np.ndarray = field(
        default_factory=lambda: np.array([10.0] * 3 + [1.0] * 6 + [100.0] * 3)
    )
    r_diag: np.ndarray = field(default_factory=lambda: np.ones(6))

    def __post_init__(self):
        self.q_diag = np.asarray(self.q_diag, dtype=float)
        self.r_diag = np.asarray(self.r_diag, dtype=float)
        if self.kp <= 0.0 or self.kd <= 0.0:
            raise ValueError("pd gains must be positive")
        if self.accel_limit <= 0.0:
            raise ValueError("accel_limit must be positive")
        if self.yaw_rate_limit <= 0.0:
            raise ValueError("yaw_rate_limit must be positive")
        if self.q_diag.shape != (12,) or np.any(self.q_diag <= 0.0):
            raise ValueError("q_diag must be 12 positive weights")
        if self.r_diag.shape != (6,) or np.any(self.r_diag <= 0.0):
            raise ValueError("r_diag must be 6 positive weights")


@dataclass
class RunRecord:
    """One run end to end: trajectory, database, estimates, diagnostics.

    Row k of observations/estimates refers to the state in row k of
    states; thrust[k] and torque[k] drove the transition from row k to
    row k + 1 (the final row keeps zeros since no step follows it).
    """

    seed: int
    mode: str
    source: str
    sensor_kind: str
    states: np.ndarray        # (N, 12) true trajectory, row 0 at mission start
    observations: np.ndarray  # (N, 12) zero-padded sensor rows
    estimates: np.ndarray     # (N, 12) in-the-loop filter means
    thrust: np.ndarray        # (N,)
    torque: np.ndarray        # (N, 3)
    trace: EstimateTrace
    pos_err: np.ndarray       # (N,) |estimated - true| position per step
    euler_err: np.ndarray     # (N,)
    completed: bool
    diverged: bool
    capture_steps: list
    waypoint_miss: np.ndarray  # per waypoint, closest true approach [m]
    rmse_filtered: np.ndarray  # (4,) block RMSE: pos, vel, euler, omega
    rmse_smoothed: np.ndarray  # (4,) same blocks after the backward pass
    tick_windows: list         # online: (step, window length) per estimator call
    em_error: Optional[str] = None

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    def __post_init__(self):
        n = self.states.shape[0]
        for name in ("observations", "estimates", "thrust", "torque",
                     "pos_err", "euler_err"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} not aligned with states ({n} rows)")


@dataclass
class CampaignSummary:
    """Converged-value ranges and pooled error statistics over a batch."""

    mode: str
    source: str
    n_runs: int
    mass_min: float
    mass_max: float
    inertia_min: np.ndarray   # (3,)
    inertia_max: np.ndarray   # (3,)
    final_masses: np.ndarray  # (n_runs,)
    final_inertias: np.ndarray  # (n_runs, 3)
    pos_err_mean: float
    pos_err_std: float
    pos_err_max: float
    euler_err_mean: float
    euler_err_std: float
    euler_err_max: float
    rmse_filtered_mean: np.ndarray  # (4,)
    rmse_smoothed_mean: np.ndarray  # (4,)
    completed_runs: int
    diverged_runs: int

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("summary needs at least one run")
        if self.mass_min > self.mass_max or np.any(self.inertia_min > self.inertia_max):
            raise ValueError("range minimum exceeds maximum")


def default_theta0() -> ThetaEstimate:
    """Deliberately poor identification start used by the campaigns."""
    return ThetaEstimate(0.001, np.array([1.0e-4, 2.0e-4, 1.0e-4]))


def _block_rmse(est, truth):
    """RMSE per state block (position, velocity, attitude, body rate)."""
    out = np.empty(4)
    for i, sl in enumerate(_BLOCKS):
        d = est[:, sl] - truth[:, sl]
        out[i] = np.sqrt(np.mean(d * d))
    return out


def _pd_accel(mean, target, ctl: ControllerConfig):
    """Lateral acceleration request toward the active waypoint.

    The vertical channel is left to the thrust loop, so only the
    horizontal components are shaped and capped here.
    """
    a = ctl.kp * (target - mean[POS]) - ctl.kd * mean[VEL]
    a[2] = 0.0
    lat = math.hypot(a[0], a[1])
    if lat > ctl.accel_limit:
        a[:2] *= ctl.accel_limit / lat
    return a


@dataclass
class _Flight:
    """Raw closed-loop products, before identification bookkeeping."""

    states: np.ndarray
    observations: np.ndarray
    estimates: np.ndarray
    thrust: np.ndarray
    torque: np.ndarray
    completed: bool
    diverged: bool
    flight_error: Optional[str]
    capture_steps: list
    waypoint_miss: np.ndarray
    pos_err: np.ndarray
    euler_err: np.ndarray
    rmse_filtered: np.ndarray
    rmse_smoothed: np.ndarray
    ticks: list
    tick_windows: list
    flagged_ticks: list


def _fly(mission: MissionSpec, kind: str, params_true: QuadParams,
         pnoise: ProcessNoiseSpec, snoise: SensorNoiseSpec,
         ctl: ControllerConfig, filter_cfg: FilterConfig, seed: int,
         em=None, use_kernel: Optional[bool] = None) -> _Flight:
    """Closed-loop flight core shared by the offline and online pipelines.

    Args:
        em: None flies with the true parameters in the controller;
            otherwise a (theta0, EmConfig, source) triple switches the
            in-the-loop estimator on, the controller consuming each new
            estimate.

    The master seed fans out one stream for the plant noise and one for
    the sensor, so the plant realization does not depend on the sensor
    package flown.
    """
    plant_ss, sensor_ss = np.random.SeedSequence(seed).spawn(2)
    plant_rng = np.random.default_rng(plant_ss)
    sensor_rng = np.random.default_rng(sensor_ss)

    A, B = linearized_ab()
    K = lqr_gain(A, B, np.diag(ctl.q_diag), np.diag(ctl.r_diag))
    H = measurement_matrix(kind)
    gravity = params_true.gravity
    g_vec = np.array([0.0, 0.0, gravity])

    cap = mission.max_steps + 1
    states = np.zeros((cap, 12))
    obs_buf = np.zeros((cap, 12))
    est_buf = np.zeros((cap, 12))
    thr_buf = np.zeros(cap)
    trq_buf = np.zeros((cap, 3))

    online = em is not None
    ticks: list = []
    tick_windows: list = []
    flagged_ticks: list = []
    if online:
        theta0, em_cfg, source = em
        theta = ThetaEstimate(theta0.mass, np.array(theta0.inertia, dtype=float), 0)
        p_ctrl = QuadParams(mass=theta.mass, inertia=theta.inertia.copy(),
                            arm_length=params_true.arm_length, gravity=gravity)
        hd_em = measurement_diag(KIND_C if source == SOURCE_PARTIAL else KIND_B)
        ys_buf = est_buf if source == SOURCE_EKF else obs_buf
        if source == SOURCE_PARTIAL:
            att_buf = np.zeros((cap, 3))
        elif source == SOURCE_EKF:
            att_buf = est_buf[:, 6:9]
        else:
            att_buf = obs_buf[:, 6:9]
        ticks.append(theta)
    else:
        p_ctrl = params_true

    x = np.zeros(12)
    x[POS] = mission.start
    accel_prev = np.zeros(3)
    belief = None
    filtered: list = []
    predicted: list = []
    phis: list = []

    waypoints = mission.waypoints
    wp_idx = 0
    capture_steps: list = []
    completed = False
    diverged = False
    flight_error = None
    n = 0
    yaw_cmd = ctl.yaw
    heading = None
    leg_idx = -1

    for k in range(mission.max_steps + 1):
        states[k] = x
        try:
            ob = observe(kind, x, accel=accel_prev, noise=snoise, rng=sensor_rng)
            if k == 0:
                init = GaussianBelief(ob.y.copy(), filter_cfg.p0.copy())
                belief = correct(init, ob.y, H, filter_cfg)
                predicted.append(init)
                phis.append(np.eye(12))
            else:
                if kind == KIND_A:
                    f = ob.accel
                else:
                    zb = rotation_body_to_earth(belief.mean[EUL])[:, 2]
                    f = (thr_buf[k - 1] / p_ctrl.mass) * zb - g_vec
                phi = phi_jacobian(belief.mean, filter_cfg.dt)
                pred = predict(belief, f, filter_cfg)
                belief = correct(pred, ob.y, H, filter_cfg)
                predicted.append(pred)
                phis.append(phi)
        except GimbalLockError as err:
            diverged = True
            flight_error = f"filter hit gimbal lock at step {k}: {err}"
            break
        filtered.append(belief)
        obs_buf[k] = ob.y
        est_buf[k] = belief.mean
        n = k + 1

        if online and k > 0 and k % em_cfg.cadence == 0:
            lo = max(0, k + 1 - em_cfg.window_size)
            sl = slice(lo, k + 1)
            try:
                theta = em_online_tick(ys_buf[sl], hd_em, thr_buf[sl],
                                       trq_buf[sl], att_buf[sl], theta,
                                       em_cfg, use_kernel)
                p_ctrl = QuadParams(mass=theta.mass,
                                    inertia=theta.inertia.copy(),
                                    arm_length=params_true.arm_length,
                                    gravity=gravity)
                ticks.append(theta)
            except GimbalLockError:
                flagged_ticks.append(len(tick_windows))
            tick_windows.append((k, k + 1 - lo))

        while wp_idx < waypoints.shape[0] and np.linalg.norm(
                belief.mean[POS] - waypoints[wp_idx]) < mission.arrival_radius:
            capture_steps.append(k)
            wp_idx += 1
        if wp_idx == waypoints.shape[0]:
            completed = True
            break
        if k == mission.max_steps:
            break  # timeout: course unfinished within the step budget
        if not np.all(np.isfinite(x)) or np.linalg.norm(x[POS]) > DIVERGENCE_GUARD:
            diverged = True
            flight_error = f"position norm escaped at step {k}"
            break

        if ctl.track_heading:
            if wp_idx != leg_idx:
                leg_idx = wp_idx
                dxy = waypoints[wp_idx, 0:2] - belief.mean[0:2]
                if math.hypot(dxy[0], dxy[1]) > 0.5:
                    heading = math.atan2(dxy[1], dxy[0])
                # a mostly vertical leg keeps the previous heading
            if heading is not None:
                err = (heading - yaw_cmd + math.pi) % (2.0 * math.pi) - math.pi
                lim = ctl.yaw_rate_limit * mission.dt
                yaw_cmd += min(max(err, -lim), lim)

        try:
            a_cmd = _pd_accel(belief.mean, waypoints[wp_idx], ctl)
            ref = flat_reference(
                FlatInput(accel=a_cmd, yaw=yaw_cmd, pos=waypoints[wp_idx],
                          vel=np.zeros(3)),
                belief.mean[EUL], gravity=gravity)
            u = lqg_control(belief.mean, ref, K)
            cmd = recover_thrust_torque(u, belief.mean, p_ctrl)
        except (GimbalLockError, DegenerateThrustError) as err:
            diverged = True
            flight_error = f"controller degenerate at step {k}: {err}"
            break
        thr_buf[k] = cmd.thrust
        trq_buf[k] = cmd.torque
        x_new = step_sde(x, cmd, params_true, pnoise, mission.dt, plant_rng)
        accel_prev = (x_new[VEL] - x[VEL]) / mission.dt
        x = x_new

    states_a = states[:n].copy()
    obs_a = obs_buf[:n].copy()
    est_a = est_buf[:n].copy()
    thr_a = thr_buf[:n].copy()
    trq_a = trq_buf[:n].copy()

    if n > 0:
        pos_err = np.linalg.norm(est_a[:, 0:3] - states_a[:, 0:3], axis=1)
        euler_err = np.linalg.norm(est_a[:, 6:9] - states_a[:, 6:9], axis=1)
        smoothed = rts_smooth(filtered, predicted, phis)
        sm = np.array([b.mean for b in smoothed])
        rmse_f = _block_rmse(est_a, states_a)
        rmse_s = _block_rmse(sm, states_a)
        miss = np.array([
            float(np.min(np.linalg.norm(states_a[:, 0:3] - w, axis=1)))
            for w in waypoints
        ])
    else:
        pos_err = np.zeros(0)
        euler_err = np.zeros(0)
        rmse_f = np.full(4, np.nan)
        rmse_s = np.full(4, np.nan)
        miss = np.full(waypoints.shape[0], np.inf)

    return _Flight(
        states=states_a, observations=obs_a, estimates=est_a, thrust=thr_a,
        torque=trq_a, completed=completed, diverged=diverged,
        flight_error=flight_error, capture_steps=capture_steps,
        waypoint_miss=miss, pos_err=pos_err, euler_err=euler_err,
        rmse_filtered=rmse_f, rmse_smoothed=rmse_s, ticks=ticks,
        tick_windows=tick_windows, flagged_ticks=flagged_ticks,
    )


def _check_source(source: str):
    if source not in SOURCES:
        raise ValueError(f"unknown source {source!r}, expected one of {SOURCES}")


def _check_dt(mission: MissionSpec, cfg: EmConfig):
    if mission.dt != cfg.filter_cfg.dt:
        raise ValueError(
            f"mission dt {mission.dt} does not match filter dt {cfg.filter_cfg.dt}")


def _em_inputs(source: str, fl: _Flight):
    """Observation rows and exogenous attitude sequence for the source."""
    if source == SOURCE_EKF:
        return fl.estimates, fl.estimates[:, 6:9]
    if source == SOURCE_FULL:
        return fl.observations, fl.observations[:, 6:9]
    return fl.observations, np.zeros((fl.observations.shape[0], 3))


def run_offline(mission: MissionSpec, source: str, params_true: QuadParams,
                theta0: ThetaEstimate, cfg: EmConfig, seed: int, *,
                process_noise: Optional[ProcessNoiseSpec] = None,
                sensor_noise: Optional[SensorNoiseSpec] = None,
                controller: Optional[ControllerConfig] = None,
                use_kernel: Optional[bool] = None) -> RunRecord:
    """Fly with true parameters, then identify from the stored database.

    The sensor package follows the source: 'ekf' flies position+gyro and
    identifies from the in-the-loop filter estimates, 'full' and 'partial'
    identify directly from their observation rows. A timeout (course
    unfinished within mission.max_steps) or divergence is recorded on the
    returned RunRecord, which is produced either way.
    """
    _check_source(source)
    _check_dt(mission, cfg)
    pnoise = ProcessNoiseSpec() if process_noise is None else process_noise
    snoise = SensorNoiseSpec() if sensor_noise is None else sensor_noise
    ctl = ControllerConfig() if controller is None else controller
    fl = _fly(mission, SOURCE_KIND[source], params_true, pnoise, snoise, ctl,
              cfg.filter_cfg, seed, em=None, use_kernel=use_kernel)

    ys, att = _em_inputs(source, fl)
    hd = measurement_diag(KIND_C if source == SOURCE_PARTIAL else KIND_B)
    em_error = fl.flight_error
    try:
        trace = em_offline(ys, hd, fl.thrust, fl.torque, att, theta0, cfg,
                           use_kernel)
    except GimbalLockError as err:
        trace = EstimateTrace(estimates=[theta0], converged=False,
                              flagged_iterations=[])
        em_error = f"identification aborted: {err}"

    return RunRecord(
        seed=seed, mode=MODE_OFFLINE, source=source,
        sensor_kind=SOURCE_KIND[source], states=fl.states,
        observations=fl.observations, estimates=fl.estimates,
        thrust=fl.thrust, torque=fl.torque, trace=trace, pos_err=fl.pos_err,
        euler_err=fl.euler_err, completed=fl.completed, diverged=fl.diverged,
        capture_steps=fl.capture_steps, waypoint_miss=fl.waypoint_miss,
        rmse_filtered=fl.rmse_filtered, rmse_smoothed=fl.rmse_smoothed,
        tick_windows=[], em_error=em_error,
    )


def run_online(mission: MissionSpec, source: str, params_true: QuadParams,
               theta0: ThetaEstimate, cfg: EmConfig, seed: int, *,
               process_noise: Optional[ProcessNoiseSpec] = None,
               sensor_noise: Optional[SensorNoiseSpec] = None,
               controller: Optional[ControllerConfig] = None,
               use_kernel: Optional[bool] = None) -> RunRecord:
    """Identify during flight, the controller consuming each new estimate.

    The estimator ticks every cfg.cadence steps on the most recent
    cfg.window_size observations (an infinite cadence never ticks, which
    reduces to a known-parameter flight with theta0 in the controller).
    The trace holds theta0 followed by one entry per tick; its flagged
    iterations are ticks skipped because the smoothing pass hit gimbal
    lock, and the plant always integrates the true parameters.
    """
    _check_source(source)
    _check_dt(mission, cfg)
    pnoise = ProcessNoiseSpec() if process_noise is None else process_noise
    snoise = SensorNoiseSpec() if sensor_noise is None else sensor_noise
    ctl = ControllerConfig() if controller is None else controller
    fl = _fly(mission, SOURCE_KIND[source], params_true, pnoise, snoise, ctl,
              cfg.filter_cfg, seed, em=(theta0, cfg, source),
              use_kernel=use_kernel)

    est_list = fl.ticks
    converged = (len(est_list) >= 2
                 and est_list[-1].rel_change(est_list[-2]) < cfg.tol)
    trace = EstimateTrace(estimates=est_list, converged=converged,
                          flagged_iterations=list(fl.flagged_ticks))

    return RunRecord(
        seed=seed, mode=MODE_ONLINE, source=source,
        sensor_kind=SOURCE_KIND[source], states=fl.states,
        observations=fl.observations, estimates=fl.estimates,
        thrust=fl.thrust, torque=fl.torque, trace=trace, pos_err=fl.pos_err,
        euler_err=fl.euler_err, completed=fl.completed, diverged=fl.diverged,
        capture_steps=fl.capture_steps, waypoint_miss=fl.waypoint_miss,
        rmse_filtered=fl.rmse_filtered, rmse_smoothed=fl.rmse_smoothed,
        tick_windows=fl.tick_windows, em_error=fl.flight_error,
    )


def _campaign_entry(args):
    (mode, source, mission, params_true, theta0, cfg, pnoise, snoise,
     controller, use_kernel, seed) = args
    mission = MissionSpec() if mission is None else mission
    params_true = QuadParams() if params_true is None else params_true
    theta0 = default_theta0() if theta0 is None else theta0
    cfg = EmConfig() if cfg is None else cfg
    runner = run_offline if mode == MODE_OFFLINE else run_online
    return runner(mission, source, params_true, theta0, cfg, seed,
                  process_noise=pnoise, sensor_noise=snoise,
                  controller=controller, use_kernel=use_kernel)


def run_campaign(mode: str, source: str, seeds, *,
                 mission: Optional[MissionSpec] = None,
                 params_true: Optional[QuadParams] = None,
                 theta0: Optional[ThetaEstimate] = None,
                 cfg: Optional[EmConfig] = None,
                 process_noise: Optional[ProcessNoiseSpec] = None,
                 sensor_noise: Optional[SensorNoiseSpec] = None,
                 controller: Optional[ControllerConfig] = None,
                 workers: int = 1,
                 use_kernel: Optional[bool] = None) -> list:
    """One independent run per seed; optional process-level fan-out.

    Every run derives its own plant and sensor streams from its master
    seed, so the batch result does not depend on execution order.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    _check_source(source)
    args = [(mode, source, mission, params_true, theta0, cfg, process_noise,
             sensor_noise, controller, use_kernel, int(s)) for s in seeds]
    if not args:
        raise ValueError("need at least one seed")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_campaign_entry, args))
    return [_campaign_entry(a) for a in args]


def summarize_campaign(records) -> CampaignSummary:
    """Reduce a batch to convergence ranges and pooled error statistics.

    The converged value of a run is the final entry of its trace; the
    ranges are a streaming min/max over runs, and the error statistics
    pool the per-step errors of every run.
    """
    records = list(records)
    if not records:
        raise ValueError("need at least one run record")
    mass_min = math.inf
    mass_max = -math.inf
    inertia_min = np.full(3, np.inf)
    inertia_max = np.full(3, -np.inf)
    masses = np.empty(len(records))
    inertias = np.empty((len(records), 3))
    for i, rec in enumerate(records):
        last = rec.trace.estimates[-1]
        masses[i] = last.mass
        inertias[i] = last.inertia
        if last.mass < mass_min:
            mass_min = last.mass
        if last.mass > mass_max:
            mass_max = last.mass
        inertia_min = np.minimum(inertia_min, last.inertia)
        inertia_max = np.maximum(inertia_max, last.inertia)

    pos_all = np.concatenate([r.pos_err for r in records])
    eul_all = np.concatenate([r.euler_err for r in records])
    return CampaignSummary(
        mode=records[0].mode,
        source=records[0].source,
        n_runs=len(records),
        mass_min=float(mass_min),
        mass_max=float(mass_max),
        inertia_min=inertia_min,
        inertia_max=inertia_max,
        final_masses=masses,
        final_inertias=inertias,
        pos_err_mean=float(pos_all.mean()),
        pos_err_std=float(pos_all.std()),
        pos_err_max=float(pos_all.max()),
        euler_err_mean=float(eul_all.mean()),
        euler_err_std=float(eul_all.std()),
        euler_err_max=float(eul_all.max()),
        rmse_filtered_mean=np.mean([r.rmse_filtered for r in records], axis=0),
        rmse_smoothed_mean=np.mean([r.rmse_smoothed for r in records], axis=0),
        completed_runs=sum(1 for r in records if r.completed),
        diverged_runs=sum(1 for r in records if r.diverged),
    )
