"""Batch command-line front end.

Subcommands:
    run         execute a campaign described by a config file plus overrides
    summarize   rebuild the summary tables from run directories on disk

Artifacts are plain text: per-run trajectory/estimate/trace/error tables as
comma-separated numeric files with a header row, JSON metrics and
manifests, and a campaign summary in both machine-readable and
human-readable form. Every directory carries a manifest with the config
hash and seed, floats are written with 17 significant digits, and nothing
time-dependent is emitted, so re-running a config reproduces the artifact
bytes exactly.

Exit status: 0 on success, 1 when any run diverged (the campaign still
completes and is written out), 2 on configuration or record errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .dynamics import ProcessNoiseSpec, QuadParams
from .em import EmConfig, ThetaEstimate
from .estimation import FilterConfig
from .harness import (
    MODES,
    SOURCES,
    SOURCE_KIND,
    ControllerConfig,
    MissionSpec,
    run_campaign,
    summarize_campaign,
)
from .sensors import SensorNoiseSpec

ENV_OUT_ROOT = "QUADEM_OUT"

TRAJECTORY_HEADER = ("step", "t", "x", "y", "z", "vx", "vy", "vz",
                     "phi", "theta", "psi", "wx", "wy", "wz")
TRACE_HEADER = ("iter", "m", "Ixx", "Iyy", "Izz")
ERRORS_HEADER = ("step", "pos_err", "euler_err")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class RunConfig:
    """Fully resolved campaign description (everything a run depends on)."""

    mode: str
    source: str
    seeds: list
    mission: MissionSpec
    params: QuadParams
    process_noise: ProcessNoiseSpec
    sensor_noise: SensorNoiseSpec
    em: EmConfig
    theta0: ThetaEstimate
    controller: ControllerConfig
    out: Optional[str] = None
    workers: int = 1


def _fmt(x) -> str:
    """17-significant-digit float text (round-trip exact for 64-bit)."""
    return "%.17g" % float(x)


def write_table(path: str, header, rows):
    """Comma-separated numeric table with a header row."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_table(path: str):
    """Inverse of write_table: (header tuple, float ndarray)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty table")
    header = tuple(lines[0].split(","))
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def write_json(path: str, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def _floats(seq):
    return [float(v) for v in np.asarray(seq, dtype=float).ravel()]


def _section(raw: dict, name: str, allowed) -> dict:
    got = raw.get(name) or {}
    if not isinstance(got, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = sorted(set(got) - set(allowed))
    if unknown:
        raise ConfigError(f"{name}: unknown keys {unknown}")
    return dict(got)


_TOP_KEYS = ("mode", "sensor", "seeds", "base_seed", "out", "workers",
             "mission", "params", "process_noise", "sensor_noise",
             "filter", "em", "controller")


def load_run_config(path: Optional[str], overrides) -> RunConfig:
    """Merge defaults, the config file, and CLI overrides; validate all of it.

    Every nested spec is constructed here, so any invariant violation
    surfaces as a field-specific error before the first run starts.
    """
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}")
        except yaml.YAMLError as err:
            raise ConfigError(f"config parse error: {err}")
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
    unknown = sorted(set(raw) - set(_TOP_KEYS))
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")

    mode = overrides.mode or raw.get("mode", "offline")
    source = overrides.sensor or raw.get("sensor", "ekf")
    if mode not in MODES:
        raise ConfigError(f"mode: {mode!r} not one of {MODES}")
    if source not in SOURCES:
        raise ConfigError(f"sensor: {source!r} not one of {SOURCES}")

    base_seed = int(raw.get("base_seed", 0))
    seeds_raw = overrides.seeds if overrides.seeds is not None else raw.get("seeds", 20)
    if isinstance(seeds_raw, (list, tuple)):
        seeds = [int(s) for s in seeds_raw]
    else:
        count = int(seeds_raw)
        if count < 1:
            raise ConfigError("seeds: need at least one")
        seeds = [base_seed + i for i in range(count)]
    if not seeds:
        raise ConfigError("seeds: need at least one")

    try:
        m = _section(raw, "mission",
                     ("start", "waypoints", "arrival_radius", "max_steps", "dt"))
        mission = MissionSpec(
            start=np.asarray(m.get("start", (0.5, 1.0, 0.0)), dtype=float),
            waypoints=np.asarray(m["waypoints"], dtype=float)
            if "waypoints" in m else MissionSpec().waypoints,
            arrival_radius=float(m.get("arrival_radius", 0.1)),
            max_steps=int(m.get("max_steps", 20000)),
            dt=float(m.get("dt", 0.01)),
        )

        psec = _section(raw, "params", ("mass", "inertia", "arm_length", "gravity"))
        params = QuadParams(
            mass=float(psec.get("mass", 0.18)),
            inertia=np.asarray(psec.get("inertia", (2.5e-4, 3.1e-4, 2.0e-4)),
                               dtype=float),
            arm_length=float(psec.get("arm_length", 0.086)),
            gravity=float(psec.get("gravity", 9.81)),
        )

        nsec = _section(raw, "process_noise", ("sigma_thrust", "sigma_torque"))
        pnoise = ProcessNoiseSpec(
            sigma_thrust=float(nsec.get("sigma_thrust", 0.02)),
            sigma_torque=float(nsec.get("sigma_torque", 1.0e-5)),
        )

        ssec = _section(raw, "sensor_noise",
                        ("sigma_pos", "sigma_vel", "sigma_euler",
                         "sigma_omega", "sigma_accel"))
        snoise = SensorNoiseSpec(**{k: float(v) for k, v in ssec.items()})

        fsec = _section(raw, "filter", ("q_scale", "r_scale", "p0_scale"))
        q_scale = float(fsec.get("q_scale", 0.0707))
        r_scale = float(fsec.get("r_scale", 0.00707))
        p0_scale = float(fsec.get("p0_scale", 1.0))
        for nm, val in (("q_scale", q_scale), ("r_scale", r_scale),
                        ("p0_scale", p0_scale)):
            if val <= 0.0:
                raise ConfigError(f"filter.{nm}: must be positive")
        filter_cfg = FilterConfig(q=q_scale * np.eye(12), r=r_scale * np.eye(12),
                                  p0=p0_scale * np.eye(12), dt=mission.dt)

        esec = _section(raw, "em", ("max_iterations", "tol", "delta",
                                    "window_size", "cadence", "rho_min",
                                    "theta0"))
        tsec = _section(esec, "theta0", ("mass", "inertia"))
        theta0 = ThetaEstimate(
            mass=float(tsec.get("mass", 0.001)),
            inertia=np.asarray(tsec.get("inertia", (1.0e-4, 2.0e-4, 1.0e-4)),
                               dtype=float),
        )
        if theta0.mass <= 0.0 or theta0.inertia.shape != (3,) \
                or np.any(theta0.inertia <= 0.0):
            raise ConfigError("em.theta0: mass and inertia must be positive")
        em = EmConfig(
            max_iterations=int(esec.get("max_iterations", 50)),
            tol=float(esec.get("tol", 1.0e-8)),
            delta=float(esec.get("delta", 1.0)),
            window_size=int(esec.get("window_size", 800)),
            cadence=int(esec.get("cadence", 4)),
            rho_min=float(esec.get("rho_min", 0.1)),
            gravity=params.gravity,
            filter_cfg=filter_cfg,
        )
        if em.max_iterations < 1:
            raise ConfigError("em.max_iterations: must be at least 1")
        if em.tol <= 0.0:
            raise ConfigError("em.tol: must be positive")
        if em.window_size < 2:
            raise ConfigError("em.window_size: must be at least 2")
        if em.cadence < 1:
            raise ConfigError("em.cadence: must be at least 1")
        if not 0.0 <= em.rho_min < 1.0:
            raise ConfigError("em.rho_min: must lie in [0, 1)")

        csec = _section(raw, "controller",
                        ("kp", "kd", "accel_limit", "yaw", "track_heading",
                         "yaw_rate_limit", "q_diag", "r_diag"))
        base = ControllerConfig()
        controller = ControllerConfig(
            kp=float(csec.get("kp", base.kp)),
            kd=float(csec.get("kd", base.kd)),
            accel_limit=float(csec.get("accel_limit", base.accel_limit)),
            yaw=float(csec.get("yaw", base.yaw)),
            track_heading=bool(csec.get("track_heading", base.track_heading)),
            yaw_rate_limit=float(csec.get("yaw_rate_limit", base.yaw_rate_limit)),
            q_diag=np.asarray(csec.get("q_diag", base.q_diag), dtype=float),
            r_diag=np.asarray(csec.get("r_diag", base.r_diag), dtype=float),
        )
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as err:
        raise ConfigError(str(err))

    workers = overrides.workers if getattr(overrides, "workers", None) else \
        int(raw.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers: must be at least 1")

    return RunConfig(
        mode=mode, source=source, seeds=seeds, mission=mission, params=params,
        process_noise=pnoise, sensor_noise=snoise, em=em, theta0=theta0,
        controller=controller, out=raw.get("out"), workers=workers,
    )


def canonical_config(cfg: RunConfig) -> dict:
    """Plain-type tree of everything the results depend on.

    The output path and worker count are execution details and stay out,
    so the hash identifies the experiment, not where it landed.
    """
    mission = cfg.mission
    params = cfg.params
    em = cfg.em
    fc = em.filter_cfg
    ctl = cfg.controller
    return {
        "mode": cfg.mode,
        "sensor": cfg.source,
        "seeds": [int(s) for s in cfg.seeds],
        "mission": {
            "start": _floats(mission.start),
            "waypoints": [_floats(w) for w in mission.waypoints],
            "arrival_radius": float(mission.arrival_radius),
            "max_steps": int(mission.max_steps),
            "dt": float(mission.dt),
        },
        "params": {
            "mass": float(params.mass),
            "inertia": _floats(params.inertia),
            "arm_length": float(params.arm_length),
            "gravity": float(params.gravity),
        },
        "process_noise": {
            "sigma_thrust": float(cfg.process_noise.sigma_thrust),
            "sigma_torque": float(cfg.process_noise.sigma_torque),
        },
        "sensor_noise": {
            "sigma_pos": float(cfg.sensor_noise.sigma_pos),
            "sigma_vel": float(cfg.sensor_noise.sigma_vel),
            "sigma_euler": float(cfg.sensor_noise.sigma_euler),
            "sigma_omega": float(cfg.sensor_noise.sigma_omega),
            "sigma_accel": float(cfg.sensor_noise.sigma_accel),
        },
        "filter": {
            "q_scale": float(fc.q[0, 0]),
            "r_scale": float(fc.r[0, 0]),
            "p0_scale": float(fc.p0[0, 0]),
        },
        "em": {
            "max_iterations": int(em.max_iterations),
            "tol": float(em.tol),
            "delta": float(em.delta),
            "window_size": int(em.window_size),
            "cadence": int(em.cadence),
            "rho_min": float(em.rho_min),
            "theta0": {
                "mass": float(cfg.theta0.mass),
                "inertia": _floats(cfg.theta0.inertia),
            },
        },
        "controller": {
            "kp": float(ctl.kp),
            "kd": float(ctl.kd),
            "accel_limit": float(ctl.accel_limit),
            "yaw": float(ctl.yaw),
            "track_heading": bool(ctl.track_heading),
            "yaw_rate_limit": float(ctl.yaw_rate_limit),
            "q_diag": _floats(ctl.q_diag),
            "r_diag": _floats(ctl.r_diag),
        },
    }


def config_text_and_hash(cfg: RunConfig):
    text = yaml.safe_dump(canonical_config(cfg), sort_keys=True,
                          default_flow_style=False)
    return text, hashlib.sha256(text.encode()).hexdigest()


def resolve_out_dir(cfg: RunConfig, flag_out: Optional[str]) -> str:
    """--out wins, then the config's out key, then <root>/<mode>-<sensor>
    with the root taken from $QUADEM_OUT (default 'runs')."""
    if flag_out:
        return flag_out
    if cfg.out:
        return str(cfg.out)
    root = os.environ.get(ENV_OUT_ROOT, "runs")
    return os.path.join(root, f"{cfg.mode}-{cfg.source}")


def write_run_dir(run_dir: str, rec, sha: str, dt: float):
    """Per-run artifact set: tables, metrics, and a seed-stamped manifest."""
    os.makedirs(run_dir, exist_ok=True)
    n = rec.states.shape[0]
    steps = np.arange(n, dtype=float)
    t = steps * dt
    write_table(os.path.join(run_dir, "trajectory.csv"), TRAJECTORY_HEADER,
                np.column_stack([steps, t, rec.states]))
    write_table(os.path.join(run_dir, "estimates.csv"), TRAJECTORY_HEADER,
                np.column_stack([steps, t, rec.estimates]))
    write_table(os.path.join(run_dir, "errors.csv"), ERRORS_HEADER,
                np.column_stack([steps, rec.pos_err, rec.euler_err]))
    write_table(os.path.join(run_dir, "trace.csv"), TRACE_HEADER,
                [[e.iteration, e.mass, e.inertia[0], e.inertia[1], e.inertia[2]]
                 for e in rec.trace.estimates])
    last = rec.trace.estimates[-1]
    write_json(os.path.join(run_dir, "metrics.json"), {
        "seed": int(rec.seed),
        "mode": rec.mode,
        "source": rec.source,
        "sensor_kind": rec.sensor_kind,
        "completed": bool(rec.completed),
        "diverged": bool(rec.diverged),
        "em_error": rec.em_error,
        "n_steps": int(rec.n_steps),
        "capture_steps": [int(s) for s in rec.capture_steps],
        "waypoint_miss": _floats(rec.waypoint_miss),
        "pos_err_mean": float(rec.pos_err.mean()) if rec.pos_err.size else None,
        "euler_err_mean": float(rec.euler_err.mean()) if rec.euler_err.size else None,
        "rmse_filtered": _floats(rec.rmse_filtered),
        "rmse_smoothed": _floats(rec.rmse_smoothed),
        "converged": bool(rec.trace.converged),
        "flagged_iterations": [int(i) for i in rec.trace.flagged_iterations],
        "trace_entries": len(rec.trace.estimates),
        "final": {"mass": float(last.mass), "inertia": _floats(last.inertia)},
    })
    write_json(os.path.join(run_dir, "manifest.json"), {
        "config_sha256": sha,
        "seed": int(rec.seed),
        "mode": rec.mode,
        "sensor": rec.source,
        "version": __version__,
    })


def summary_dict(s) -> dict:
    return {
        "mode": s.mode,
        "source": s.source,
        "n_runs": int(s.n_runs),
        "mass_min": float(s.mass_min),
        "mass_max": float(s.mass_max),
        "inertia_min": _floats(s.inertia_min),
        "inertia_max": _floats(s.inertia_max),
        "final_masses": _floats(s.final_masses),
        "final_inertias": [_floats(row) for row in s.final_inertias],
        "pos_err_mean": float(s.pos_err_mean),
        "pos_err_std": float(s.pos_err_std),
        "pos_err_max": float(s.pos_err_max),
        "euler_err_mean": float(s.euler_err_mean),
        "euler_err_std": float(s.euler_err_std),
        "euler_err_max": float(s.euler_err_max),
        "rmse_filtered_mean": _floats(s.rmse_filtered_mean),
        "rmse_smoothed_mean": _floats(s.rmse_smoothed_mean),
        "completed_runs": int(s.completed_runs),
        "diverged_runs": int(s.diverged_runs),
    }


def summary_text(s) -> str:
    """Two-table layout: converged mass, converged inertia, then errors."""
    lines = [
        f"campaign mode={s.mode} sensor={s.source} runs={s.n_runs} "
        f"completed={s.completed_runs} diverged={s.diverged_runs}",
        "",
        "estimated mass [kg]",
        f"  min  {_fmt(s.mass_min)}",
        f"  max  {_fmt(s.mass_max)}",
        "",
        "estimated inertia [kg m^2]",
        "  component  min                      max",
    ]
    for i, nm in enumerate(("Ixx", "Iyy", "Izz")):
        lines.append(f"  {nm}        {_fmt(s.inertia_min[i]):<24} "
                     f"{_fmt(s.inertia_max[i])}")
    lines += [
        "",
        "state estimation error",
        f"  position [m]   mean {_fmt(s.pos_err_mean)}  std {_fmt(s.pos_err_std)}"
        f"  max {_fmt(s.pos_err_max)}",
        f"  euler [rad]    mean {_fmt(s.euler_err_mean)}  std {_fmt(s.euler_err_std)}"
        f"  max {_fmt(s.euler_err_max)}",
        "",
        "block RMSE (position, velocity, euler, rate)",
        "  filtered  " + "  ".join(_fmt(v) for v in s.rmse_filtered_mean),
        "  smoothed  " + "  ".join(_fmt(v) for v in s.rmse_smoothed_mean),
        "",
    ]
    return "\n".join(lines)


def write_summary(out_dir: str, s):
    write_json(os.path.join(out_dir, "summary.json"), summary_dict(s))
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(summary_text(s))


def cmd_run(args) -> int:
    try:
        cfg = load_run_config(args.config, args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    out_dir = resolve_out_dir(cfg, args.out)
    os.makedirs(out_dir, exist_ok=True)
    text, sha = config_text_and_hash(cfg)
    with open(os.path.join(out_dir, "config.yaml"), "w") as fh:
        fh.write(text)

    records = run_campaign(
        cfg.mode, cfg.source, cfg.seeds, mission=cfg.mission,
        params_true=cfg.params, theta0=cfg.theta0, cfg=cfg.em,
        process_noise=cfg.process_noise, sensor_noise=cfg.sensor_noise,
        controller=cfg.controller, workers=cfg.workers,
    )
    for rec in records:
        write_run_dir(os.path.join(out_dir, f"run_{rec.seed:04d}"), rec, sha,
                      cfg.mission.dt)
    summary = summarize_campaign(records)
    write_summary(out_dir, summary)
    write_json(os.path.join(out_dir, "manifest.json"), {
        "config_sha256": sha,
        "seeds": [int(s) for s in cfg.seeds],
        "mode": cfg.mode,
        "sensor": cfg.source,
        "sensor_kind": SOURCE_KIND[cfg.source],
        "version": __version__,
        "runs": [f"run_{rec.seed:04d}" for rec in records],
    })
    print(summary_text(summary), end="")

    diverged = [rec.seed for rec in records if rec.diverged]
    if diverged:
        print(f"diverged runs (seeds): {diverged}", file=sys.stderr)
        return 1
    return 0


def _expand_run_dirs(paths):
    """Accept campaign directories or individual run directories."""
    runs = []
    for p in paths:
        if not os.path.isdir(p):
            raise ConfigError(f"{p}: not a directory")
        subs = sorted(d for d in os.listdir(p)
                      if d.startswith("run_")
                      and os.path.isdir(os.path.join(p, d)))
        if subs:
            runs.extend(os.path.join(p, d) for d in subs)
        else:
            runs.append(p)
    return runs


def load_run_shim(run_dir: str):
    """Rebuild the slice of a run that the summary reduction needs."""
    from types import SimpleNamespace

    try:
        metrics = read_json(os.path.join(run_dir, "metrics.json"))
        _, trace_rows = read_table(os.path.join(run_dir, "trace.csv"))
        _, err_rows = read_table(os.path.join(run_dir, "errors.csv"))
    except (OSError, json.JSONDecodeError, ValueError) as err:
        raise ConfigError(f"{run_dir}: missing or corrupt record ({err})")
    if trace_rows.shape[0] < 1 or trace_rows.shape[1] != 5:
        raise ConfigError(f"{run_dir}: trace.csv malformed")
    final = ThetaEstimate(mass=trace_rows[-1, 1], inertia=trace_rows[-1, 2:5],
                          iteration=int(trace_rows[-1, 0]))
    trace = SimpleNamespace(estimates=[final])
    return SimpleNamespace(
        seed=int(metrics["seed"]),
        mode=metrics["mode"],
        source=metrics["source"],
        trace=trace,
        pos_err=err_rows[:, 1],
        euler_err=err_rows[:, 2],
        rmse_filtered=np.asarray(metrics["rmse_filtered"], dtype=float),
        rmse_smoothed=np.asarray(metrics["rmse_smoothed"], dtype=float),
        completed=bool(metrics["completed"]),
        diverged=bool(metrics["diverged"]),
    )


def cmd_summarize(args) -> int:
    try:
        run_dirs = _expand_run_dirs(args.dirs)
        if not run_dirs:
            raise ConfigError("no run directories found")
        records = [load_run_shim(d) for d in run_dirs]
        summary = summarize_campaign(records)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    out_dir = args.out or (args.dirs[0] if os.path.isdir(args.dirs[0]) else ".")
    os.makedirs(out_dir, exist_ok=True)
    write_summary(out_dir, summary)
    print(summary_text(summary), end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="quadem",
        description="closed-loop quadcopter identification campaigns",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a campaign")
    p_run.add_argument("--config", help="YAML config file (all keys optional)")
    p_run.add_argument("--mode", choices=MODES, help="override config mode")
    p_run.add_argument("--sensor", choices=SOURCES,
                       help="override observation source")
    p_run.add_argument("--seeds", type=int,
                       help="number of seeds, base_seed + i each")
    p_run.add_argument("--out", help="output directory "
                       f"(default <${ENV_OUT_ROOT} or 'runs'>/<mode>-<sensor>)")
    p_run.add_argument("--workers", type=int, default=None,
                       help="parallel runs (default 1)")
    p_run.set_defaults(func=cmd_run)

    p_sum = sub.add_parser("summarize",
                           help="rebuild summary tables from run directories")
    p_sum.add_argument("dirs", nargs="+",
                       help="campaign directory or individual run directories")
    p_sum.add_argument("--out", help="where to write summary files "
                       "(default: first directory)")
    p_sum.set_defaults(func=cmd_summarize)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
