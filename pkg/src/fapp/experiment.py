"""Closed-loop episodes, metrics and controller comparison.

Each episode simulates the quadrotor at the inner-loop rate and calls the outer
controller every ``control_decimation`` inner steps. The outer command is held
between controller calls.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baseline import TimedReference, track
from .config import CASE_OFFSETS, ExperimentConfig
from .errors import (
    DegenerateThrust,
    MissingEpisode,
    NonFiniteState,
    QpInfeasible,
    TiltLimit,
)
from .flatness import discretize_chain, flat_model_matrices, psi_inverse
from .mpc import PathFollowingMPC, audit_solution
from .path import cross_track_distance, discretize_path, path_speed, reference_flat_state
from .simulator import NO_WIND, estimate_flat_state, hover_state, state_from_flat, step

log = logging.getLogger(__name__)

PATH_END_TOLERANCE = 1e-3
JERK_AUDIT_TOL = 1e-6
THRUST_SLACK = 0.05

TRACE_COLUMNS = (
    "time", "x", "y", "z", "vx", "vy", "vz", "roll", "pitch", "yaw", "p", "q", "r",
    "thrust", "zdot_cmd", "phi_cmd", "theta_cmd", "r_cmd", "wind_x", "wind_y", "wind_z",
    "x_ref", "y_ref", "z_ref", "theta", "theta_dot", "cross_track",
)
SOLUTION_COLUMNS = (
    "time", "theta", "theta_dot", "w", "v_x", "v_y", "v_z", "v_psi", "status",
    "iterations", "primal_residual", "dual_residual", "max_jerk_excess", "max_thrust_ratio",
)


@dataclass
class MetricsReport:
    """Deterministic summary of one episode (no wall-clock quantities)."""

    controller: str
    duration: float
    steps: int
    rms_tracking_error: float
    max_cross_track_error: float
    rms_cross_track_error: float
    final_theta: float
    mean_speed: float
    constraint_violation_count: int
    max_jerk_excess: float
    max_thrust_ratio: float
    qp_failures: int
    failed: bool = False
    error: str | None = None

    def to_json(self):
        data = {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}
        return json.dumps(data, indent=2, sort_keys=True)


@dataclass
class EpisodeResult:
    config: ExperimentConfig
    trace: dict
    solutions: list
    metrics: MetricsReport
    reference: TimedReference | None = None
    timing: dict = field(default_factory=dict)

    @property
    def times(self):
        return self.trace["time"]

    def column(self, name):
        return self.trace[name]


def _empty_trace():
    return {name: np.zeros(0) for name in TRACE_COLUMNS}


def _trace_row(state, wind, ref_pos, theta, theta_dot):
    quad = state.quad
    phi, theta_angle, psi = quad.euler_angles()
    cmd = state.command
    return (state.time, *quad.position, *quad.velocity, phi, theta_angle, psi, *quad.body_rates,
            state.thrust, cmd.zdot_cmd, cmd.phi_cmd, cmd.theta_cmd, cmd.r_cmd,
            *wind.force_at(state.time), *ref_pos, theta, theta_dot)


def _finish_trace(rows, path):
    if not rows:
        return _empty_trace()
    arr = np.array(rows, dtype=float)
    trace = {name: arr[:, i] for i, name in enumerate(TRACE_COLUMNS[:-1])}
    trace["cross_track"] = cross_track_distance(arr[:, 1:4], path)
    return trace


def _metrics(config, trace, audits, qp_failures, failed=False, error=None):
    steps = int(trace["time"].size)
    if steps == 0:
        nan = float("nan")
        return MetricsReport(config.controller, 0.0, 0, nan, nan, nan, nan, nan, 0, 0.0, 0.0,
                             qp_failures, failed, error)
    pos = np.column_stack([trace["x"], trace["y"], trace["z"]])
    ref = np.column_stack([trace["x_ref"], trace["y_ref"], trace["z_ref"]])
    err = np.linalg.norm(pos - ref, axis=1)
    speed = np.linalg.norm(np.column_stack([trace["vx"], trace["vy"], trace["vz"]]), axis=1)
    jerk_excess = max((a[0] for a in audits), default=0.0)
    thrust_ratio = max((a[1] for a in audits), default=0.0)
    violations = sum(1 for a in audits
                     if a[0] > JERK_AUDIT_TOL or a[1] > 1.0 + THRUST_SLACK)
    return MetricsReport(
        controller=config.controller,
        duration=float(trace["time"][-1]),
        steps=steps,
        rms_tracking_error=float(np.sqrt(np.mean(err ** 2))),
        max_cross_track_error=float(trace["cross_track"].max()),
        rms_cross_track_error=float(np.sqrt(np.mean(trace["cross_track"] ** 2))),
        final_theta=float(trace["theta"][-1]),
        mean_speed=float(speed.mean()),
        constraint_violation_count=int(violations),
        max_jerk_excess=float(jerk_excess),
        max_thrust_ratio=float(thrust_ratio),
        qp_failures=qp_failures,
        failed=failed,
        error=error,
    )


def _timing(update_times, qp_times):
    if not qp_times:
        return {}
    qp_ms = np.array(qp_times) * 1e3
    upd_ms = np.array(update_times) * 1e3
    return {
        "qp_solve_ms": {"median": float(np.median(qp_ms)), "p99": float(np.percentile(qp_ms, 99)),
                        "max": float(qp_ms.max())},
        "controller_update_ms": {"median": float(np.median(upd_ms)),
                                 "p99": float(np.percentile(upd_ms, 99)), "max": float(upd_ms.max())},
        "solves": len(qp_times),
    }


def _initial_path_state(config):
    return np.array([0.0, config.initial_theta_dot, 0.0, 0.0])


def _initial_state(config, path):
    """Hover at the path start, or flying with the virtual vehicle when it starts moving."""
    offset = np.array(config.initial_offset)
    if config.initial_theta_dot > 0:
        z0 = reference_flat_state(path, _initial_path_state(config))
        z0[[0, 4, 8]] += offset
        return state_from_flat(z0, np.zeros(4), config.quad)
    start = path.evaluate(0.0)
    return hover_state(start[:3] + offset, config.quad, yaw=float(start[3]))


def _safe_inverse(z, v, params, fallback):
    try:
        return psi_inverse(z, v, params)
    except (DegenerateThrust, TiltLimit) as exc:
        log.warning("nominal inverse failed (%s); holding previous command", exc)
        return fallback


def _run_fapp(config, path):
    params = config.quad
    sim_dt = config.sim_dt
    ctrl_dt = config.control_dt
    n_steps = int(round(config.duration / sim_dt))
    mpc = PathFollowingMPC(path, config.weights, config.constraints,
                           dt=config.mpc_dt, horizon=config.horizon)
    A, B = flat_model_matrices()
    # Feedforward is refreshed every inner step. Each held command is the
    # inverse of the desired flat state at the end of its step, so the jerk
    # seen by the estimator at the next sample matches the plan.
    offsets = [discretize_chain(A, B, (j + 1) * sim_dt) for j in range(config.control_decimation)]
    A_ps, B_ps = discretize_path(sim_dt)
    B_ps = B_ps[:, 0]

    state = _initial_state(config, path)
    s = _initial_path_state(config)
    psi_prev = float(path.evaluate(0.0)[3])
    cmd = state.command
    z_plan = None
    prev = None
    v0, w0 = np.zeros(4), 0.0
    rows, solutions, audits, ref_t, ref_z = [], [], [], [], []
    update_times, qp_times = [], []
    qp_failures = 0
    error = None

    def log_row():
        z_ref = reference_flat_state(path, s, clamp=True)
        rows.append(_trace_row(state, config.wind, z_ref[[0, 4, 8]], s[0], s[1]))

    if n_steps > 0:
        log_row()
    try:
        for i in range(n_steps):
            if i % config.control_decimation == 0:
                est = estimate_flat_state(state, params, psi_prev)
                psi_prev = est.z[12]
                try:
                    sol = mpc.solve(est.z, s, warm_start=prev,
                                    elapsed=ctrl_dt if prev is not None else None)
                    prev = sol
                    v0, w0 = sol.v.copy(), sol.w
                    audits.append(audit_solution(sol, config.constraints))
                    update_times.append(sol.stats.wall_time)
                    qp_times.append(sol.stats.qp_time)
                    status, iters = sol.stats.status, sol.stats.iterations
                    pres, dres = sol.stats.primal_residual, sol.stats.dual_residual
                except QpInfeasible as exc:
                    qp_failures += 1
                    log.warning("t=%.3f: %s; holding previous input", state.time, exc)
                    status, iters, pres, dres = "Failed", 0, math.nan, math.nan
                ref_t.append(state.time)
                ref_z.append(reference_flat_state(path, s, clamp=True))
                audit = audits[-1] if audits and status != "Failed" else (math.nan, math.nan)
                solutions.append((state.time, s[0], s[1], w0, *v0, status, iters, pres, dres, *audit))
                z_plan = est.z
            A_j, B_j = offsets[i % config.control_decimation]
            cmd = _safe_inverse(A_j @ z_plan + B_j @ v0, v0, params, cmd)
            state = step(state, cmd, config.wind, sim_dt, params)
            s = A_ps @ s + B_ps * w0
            log_row()
            if config.stop_at_path_end and s[0] >= 1.0 - PATH_END_TOLERANCE:
                break
    except NonFiniteState as exc:
        error = str(exc)
        log.error("episode failed: %s", exc)

    trace = _finish_trace(rows, path)
    metrics = _metrics(config, trace, audits, qp_failures, failed=error is not None, error=error)
    reference = TimedReference(ref_t, ref_z) if ref_t else None
    return EpisodeResult(config, trace, solutions, metrics, reference, _timing(update_times, qp_times))


def _run_baseline(config, path, reference):
    params = config.quad
    n_steps = int(round(config.duration / config.sim_dt))
    state = _initial_state(config, path)
    psi_prev = float(path.evaluate(0.0)[3])
    cmd = state.command
    rows = []
    error = None
    if n_steps > 0:
        rows.append(_trace_row(state, config.wind, reference.at(0.0)[[0, 4, 8]], math.nan, math.nan))
    try:
        for i in range(n_steps):
            if i % config.control_decimation == 0:
                est = estimate_flat_state(state, params, psi_prev)
                psi_prev = est.z[12]
                cmd = track(est.z, state.time, reference, config.gains, params)
            state = step(state, cmd, config.wind, config.sim_dt, params)
            rows.append(_trace_row(state, config.wind, reference.at(state.time)[[0, 4, 8]],
                                   math.nan, math.nan))
            if config.stop_at_path_end and state.time >= reference.times[-1] - 1e-9:
                break
    except NonFiniteState as exc:
        error = str(exc)
        log.error("episode failed: %s", exc)
    trace = _finish_trace(rows, path)
    metrics = _metrics(config, trace, [], 0, failed=error is not None, error=error)
    return EpisodeResult(config, trace, [], metrics, reference, {})


def generate_nominal_reference(config):
    """Fly the undisturbed case-(i) episode with FAPP and return its timed reference."""
    nominal = replace(config, controller="fapp", wind=NO_WIND,
                      initial_offset=CASE_OFFSETS["i"], reference_file=None)
    result = _run_fapp(nominal, nominal.path())
    if result.reference is None:
        raise MissingEpisode("nominal episode produced no reference samples")
    return result.reference


def run_episode(config, reference=None):
    """Simulate one closed-loop episode.

    Parameters
    ----------
    config : ExperimentConfig
    reference : TimedReference, optional
        Nominal trajectory for the baseline. When omitted it is read from
        ``config.reference_file`` or generated with `generate_nominal_reference`.
    """
    path = config.path()
    if config.controller == "fapp":
        return _run_fapp(config, path)
    if reference is None:
        if config.reference_file:
            reference = TimedReference.from_csv(config.reference_file)
        else:
            reference = generate_nominal_reference(config)
    return _run_baseline(config, path, reference)


def run_episodes(configs, reference=None, max_workers=None):
    """Run independent episodes on a thread pool, preserving input order."""
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda cfg: run_episode(cfg, reference), configs))


def rms_reduction(rms_a, rms_b):
    """Percentage by which ``rms_a`` improves on ``rms_b``."""
    if rms_b == 0:
        return 0.0 if rms_a == 0 else -math.inf
    return 100.0 * (1.0 - rms_a / rms_b)


def compare(metrics_a, metrics_b):
    """Paired metrics of two episodes and the RMS reduction of ``a`` over ``b``."""
    for m in (metrics_a, metrics_b):
        if m is None:
            raise MissingEpisode("both episodes must be available for comparison")
    a = asdict(metrics_a) if isinstance(metrics_a, MetricsReport) else dict(metrics_a)
    b = asdict(metrics_b) if isinstance(metrics_b, MetricsReport) else dict(metrics_b)
    if a.get("failed") or b.get("failed"):
        raise MissingEpisode("cannot compare a failed episode")
    return {
        "a": a,
        "b": b,
        "rms_reduction_percent": rms_reduction(a["rms_tracking_error"], b["rms_tracking_error"]),
        "cross_track_rms_reduction_percent": rms_reduction(a["rms_cross_track_error"],
                                                           b["rms_cross_track_error"]),
        "max_cross_track_reduction_percent": rms_reduction(a["max_cross_track_error"],
                                                           b["max_cross_track_error"]),
    }


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def write_outputs(result, out_dir):
    """Write trace.csv, solution.csv, metrics.json, timing.json and reference.csv."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "trace.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        columns = [result.trace[name] for name in TRACE_COLUMNS]
        for row in zip(*columns):
            writer.writerow([_fmt(v) for v in row])
    with open(os.path.join(out_dir, "solution.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SOLUTION_COLUMNS)
        for row in result.solutions:
            writer.writerow([_fmt(v) for v in row])
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        fh.write(result.metrics.to_json() + "\n")
    with open(os.path.join(out_dir, "timing.json"), "w") as fh:
        fh.write(json.dumps(result.timing, indent=2, sort_keys=True) + "\n")
    if result.reference is not None and result.config.controller == "fapp":
        result.reference.to_csv(os.path.join(out_dir, "reference.csv"))


def load_metrics(out_dir):
    filename = os.path.join(out_dir, "metrics.json")
    if not os.path.exists(filename):
        raise MissingEpisode(f"no metrics.json in {out_dir}")
    with open(filename) as fh:
        return json.load(fh)


def reference_speed(path, trace):
    """Virtual-vehicle speed along a FAPP trace [m/s]."""
    return np.array([path_speed(path, th, thd) for th, thd in zip(trace["theta"], trace["theta_dot"])])


def reference_speed_profile(path, reference, times):
    """Speed of a timed reference (from its flat-state velocity block) at ``times``."""
    return np.array([np.linalg.norm(reference.at(t)[[1, 5, 9]]) for t in times])
