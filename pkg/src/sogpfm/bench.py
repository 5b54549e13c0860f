"""Closed-loop tracking benchmark comparing the deletion policies.

A run simulates the two-link arm following the two-task schedule under the
learning controller, then reports tracking and modeling RMSE per task and
per joint, RMSE over fixed windows, and basis-set churn.
"""

from concurrent.futures import ProcessPoolExecutor
import configparser
import csv
from dataclasses import dataclass, field, fields, replace
import logging
import math
import os
import time

import numpy as np

from . import armsim
from .control import ControllerConfig, GpBank, compute_torque, observe
from .exceptions import SimulationDivergenceError
from .sogp import POLICIES
from .trajgen import DEFAULT_WAYPOINTS, default_two_task_schedule

logger = logging.getLogger(__name__)

SCHEMES = POLICIES + ("pd",)
TASKS = ("task1", "task2")
SUMMARY_METRICS = ("tracking_rmse", "modeling_rmse", "deletions")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``scheme="pd"`` disables the feedforward term entirely (feedback-only
    baseline); the GP settings are then ignored.
    """

    scheme: str = "fs"
    h: int = 15
    bv_capacity: int = 45
    eps_tol: float = 0.01
    signed_score: bool = False
    sigma_s2: float = 1.0
    sigma_n2: float = 0.04
    lengthscales: tuple = (0.5, 0.5, 0.5, 0.5, 0.2, 0.2)
    kp: tuple = (200.0, 200.0)
    kd: tuple = (20.0, 20.0)
    warmup: float = 2.0
    ramp: float = 0.6
    update_stride: int = 7
    m1: float = 1.0
    m2: float = 1.0
    l1: float = 0.5
    l2: float = 0.5
    gravity: float = 9.81
    friction: tuple = (0.1, 0.1)
    noise_var: float = 1e-14
    estimator: str = "linear_eso"
    estimator_bandwidth: float = 400.0
    waypoints: tuple = DEFAULT_WAYPOINTS
    segment_duration: float = 1.25
    task1_duration: float = 40.0
    bridge_duration: float = 1.0
    circle_center: tuple = (0.0, 0.5)
    circle_radius: float = 0.5
    circle_period: float = 4.0
    total_duration: float = 60.0
    dt: float = 1e-3
    seed: int = 0
    trace_decimation: int = 10
    window: float = 1.0
    out: str = "out"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.h < 1:
            raise ValueError("h must be >= 1")
        if self.dt <= 0 or self.window <= 0 or self.trace_decimation < 1:
            raise ValueError("dt and window must be > 0, trace_decimation >= 1")

    def controller_config(self):
        return ControllerConfig(
            kp=self.kp, kd=self.kd, ramp_duration=self.ramp, warmup_duration=self.warmup,
            update_stride=self.update_stride, capacity=self.bv_capacity, eps_tol=self.eps_tol,
            policy=self.scheme if self.scheme != "pd" else "pis", forget_period=self.h,
            sigma_s2=self.sigma_s2, sigma_n2=self.sigma_n2, lengthscales=self.lengthscales,
            signed_score=self.signed_score,
        )

    def arm_params(self):
        return armsim.ArmParams(m1=self.m1, m2=self.m2, l1=self.l1, l2=self.l2,
                                g=self.gravity, friction=self.friction)

    def schedule(self):
        return default_two_task_schedule(
            waypoints=self.waypoints, segment_duration=self.segment_duration,
            task1_duration=self.task1_duration, bridge_duration=self.bridge_duration,
            circle_center=self.circle_center, circle_radius=self.circle_radius,
            circle_period=self.circle_period, total_duration=self.total_duration,
        )

    # -- flat ``key = value`` files ------------------------------------

    @classmethod
    def from_text(cls, text, **overrides):
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.optionxform = str
        parser.read_string("[experiment]\n" + text)
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in parser["experiment"].items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _parse_value(raw, known[key].default)
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, **overrides):
        with open(path) as fh:
            return cls.from_text(fh.read(), **overrides)

    def to_text(self):
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _parse_value(raw, default):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        if ";" in raw:
            return tuple(tuple(float(v) for v in row.split(",")) for row in raw.split(";") if row.strip())
        return tuple(float(v) for v in raw.split(","))
    return raw


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple) and value and isinstance(value[0], tuple):
        return "; ".join(",".join(repr(float(v)) for v in row) for row in value)
    if isinstance(value, (tuple, list, np.ndarray)):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ----------------------------------------------------------------------
# metrics


def rmse(errors):
    """RMSE over every scalar component of a sequence of error vectors."""
    arr = np.asarray(errors, dtype=float)
    if arr.size == 0:
        raise ValueError("rmse of an empty sequence")
    return float(np.sqrt(np.mean(arr * arr)))


def rmse_per_joint(errors):
    arr = np.atleast_2d(np.asarray(errors, dtype=float))
    if arr.size == 0:
        raise ValueError("rmse of an empty sequence")
    return np.sqrt(np.mean(arr * arr, axis=0))


@dataclass
class RunMetrics:
    """Results of one run.

    Attributes
    ----------
    eval_start : float
        Start of the scored period, see :func:`evaluation_start`.
    switch_time : float
        Time at which Task 2 begins.
    windows : ndarray of shape (n_windows, 4)
        Columns ``t_start, t_end, tracking_rmse, modeling_rmse`` (pooled over
        joints) for consecutive windows tiling ``[warmup, total]``.
    table : dict
        ``table[task][metric]`` is a per-joint array, metrics as in
        ``SUMMARY_METRICS``.
    pooled : dict
        ``pooled[task]`` is the pooled tracking RMSE of that task and
        ``pooled["total"]`` the one over all scored samples.
    deletions_by_rule : dict
        Per-joint counts of ``"oldest"`` and ``"score"`` evictions.
    step_time : dict
        Wall-clock seconds per control step: mean, median, max.
    update_times : ndarray of shape (n_updates, 4)
        ``t``, wall seconds of the bank update, joint-1 basis size after it,
        number of joints that took the full (basis-growing) branch.
    min_update_variance : float
        Smallest unclamped predictive variance met during updates.
    max_gram_residual : float
        Largest inverse-Gram residual seen at the periodic checks (nan if
        checks were disabled).
    n_gram_checks : int
    """

    eval_start: float
    switch_time: float
    windows: np.ndarray
    table: dict
    pooled: dict
    deletions_by_rule: dict
    step_time: dict
    update_times: np.ndarray
    min_update_variance: float
    max_gram_residual: float = float("nan")
    n_gram_checks: int = 0

    def task_windows(self, task):
        """Window rows lying entirely inside the scored part of ``task``."""
        w = self.windows
        if task == "task1":
            mask = (w[:, 0] >= self.eval_start - 1e-9) & (w[:, 1] <= self.switch_time + 1e-9)
        else:
            mask = w[:, 0] >= self.switch_time - 1e-9
        return w[mask]


@dataclass
class RunResult:
    config: ExperimentConfig
    metrics: RunMetrics
    trace: np.ndarray
    bank: GpBank = field(repr=False, default=None)

    @property
    def trace_header(self):
        return trace_header(len(self.config.kp))


def trace_header(n):
    cols = ["t"]
    for prefix in ("qd", "q", "e", "tauff", "taufb", "em", "bv_size"):
        cols += [f"{prefix}{i + 1}" for i in range(n)]
    return cols


def evaluation_start(cfg):
    """First window boundary at or after the end of the feedforward ramp-in.

    Until the basis first overflows every scheme behaves identically, and
    the ramp-in transient dwarfs the learned-controller error, so task
    scores start here. The window series itself still begins at warmup.
    """
    n = math.ceil(cfg.ramp / cfg.window - 1e-9)
    return min(cfg.warmup + n * cfg.window, cfg.task1_duration)


def run_experiment(cfg, gram_check_every=0, bank=None):
    """Simulate one closed-loop run and collect its metrics.

    Parameters
    ----------
    cfg : ExperimentConfig
    gram_check_every : int, default=0
        If positive, evaluate the inverse-Gram residual of every joint model
        after each ``gram_check_every``-th bank update.
    bank : GpBank, optional
        Pre-trained bank to start from. Its normalizer is kept if already
        fitted.

    Returns
    -------
    RunResult
    """
    arm = cfg.arm_params()
    ctrl = cfg.controller_config()
    sched = cfg.schedule()
    n = ctrl.n_joints
    if bank is None:
        bank = GpBank(ctrl)
    use_gp = cfg.scheme != "pd"
    rng = np.random.default_rng(cfg.seed)
    estimator = armsim.StateEstimator(cfg.estimator, cfg.estimator_bandwidth, n)

    n_steps = int(round(cfg.total_duration / cfg.dt))
    warmup_steps = int(round(cfg.warmup / cfg.dt))
    switch_t = cfg.task1_duration

    q0, _, _ = sched.eval(0.0)
    state = armsim.ArmState(q0, np.zeros(n), 0.0)
    q_meas = armsim.measure(state, cfg.noise_var, rng)
    truth_acc = armsim.forward_dynamics(arm, state, np.zeros(n))
    q_hat, v_hat, a_hat = estimator.update(q_meas, cfg.dt, truth=(state.q, state.qd, truth_acc))

    track_err = np.zeros((n_steps, n))
    model_err = np.zeros((n_steps, n))
    times = np.arange(n_steps) * cfg.dt
    trace_rows = []
    warmup_targets = []
    deletions = {task: np.zeros(n, dtype=int) for task in TASKS}
    by_rule = {"oldest": np.zeros(n, dtype=int), "score": np.zeros(n, dtype=int)}
    update_times = []
    min_var = math.inf
    max_resid, n_checks, n_updates = 0.0, 0, 0
    step_walls = np.zeros(n_steps)
    prefit = bank.is_normalized

    for k in range(n_steps):
        wall0 = time.perf_counter()
        t = times[k]
        q_d, qd_d, qdd_d = sched.eval(t)
        if use_gp and k == warmup_steps and not prefit:
            bank.fit_normalizer(warmup_targets)
        if use_gp:
            tau, tau_ff, tau_fb, pred = compute_torque(ctrl, bank, q_d, qd_d, qdd_d, q_hat, v_hat, t,
                                                       return_prediction=True)
        else:
            tau_fb = ctrl.kp * (q_d - q_hat) + ctrl.kd * (qd_d - v_hat)
            tau_ff = pred = np.zeros(n)
            tau = tau_fb

        e = q_d - state.q
        em = tau - pred
        track_err[k] = e
        model_err[k] = em
        if k % cfg.trace_decimation == 0:
            sizes = [m.n_basis for m in bank.models] if use_gp else [0] * n
            trace_rows.append(np.concatenate([[t], q_d, state.q, e, tau_ff, tau_fb, em, sizes]))

        try:
            state = armsim.step(arm, state, tau, cfg.dt)
        except SimulationDivergenceError as exc:
            raise SimulationDivergenceError(
                f"simulation diverged at t={t:.4f} s (q={state.q.tolist()}, qd={state.qd.tolist()})",
                t=t, state=state,
            ) from exc
        q_meas = armsim.measure(state, cfg.noise_var, rng)
        truth = None
        if cfg.estimator == "exact":
            truth = (state.q, state.qd, armsim.forward_dynamics(arm, state, tau))
        q_hat, v_hat, a_hat = estimator.update(q_meas, cfg.dt, truth=truth)

        if use_gp:
            if k < warmup_steps and not prefit:
                warmup_targets.append(tau)
            elif k >= warmup_steps:
                u0 = time.perf_counter()
                reports = observe(ctrl, bank, q_hat, v_hat, a_hat, tau)
                if reports is not None:
                    update_times.append((t, time.perf_counter() - u0, bank.models[0].n_basis,
                                         sum(r.branch == "full" for r in reports)))
                    n_updates += 1
                    task = "task1" if t < switch_t else "task2"
                    for j, rep in enumerate(reports):
                        min_var = min(min_var, rep.variance)
                        if rep.deleted_index is not None:
                            deletions[task][j] += 1
                            by_rule[rep.deletion_rule][j] += 1
                    if gram_check_every and n_updates % gram_check_every == 0:
                        n_checks += 1
                        for m in bank.models:
                            max_resid = max(max_resid, m.inverse_gram_residual())
        step_walls[k] = time.perf_counter() - wall0

    metrics = _collect_metrics(cfg, times, track_err, model_err, deletions, by_rule, step_walls,
                               update_times, min_var, max_resid if gram_check_every else float("nan"),
                               n_checks)
    return RunResult(cfg, metrics, np.array(trace_rows), bank if use_gp else None)


def _collect_metrics(cfg, times, track_err, model_err, deletions, by_rule, step_walls,
                     update_times, min_var, max_resid, n_checks):
    start = evaluation_start(cfg)
    post = times >= start - 1e-12
    masks = {"task1": post & (times < cfg.task1_duration - 1e-12),
             "task2": times >= cfg.task1_duration - 1e-12}
    table = {}
    pooled = {}
    for task, mask in masks.items():
        table[task] = {
            "tracking_rmse": rmse_per_joint(track_err[mask]),
            "modeling_rmse": rmse_per_joint(model_err[mask]),
            "deletions": deletions[task],
        }
        pooled[task] = rmse(track_err[mask])
    pooled["total"] = rmse(track_err[post])

    edges = np.arange(cfg.warmup, cfg.total_duration + 1e-9, cfg.window)
    if edges[-1] < cfg.total_duration - 1e-9:
        edges = np.append(edges, cfg.total_duration)
    windows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (times >= lo - 1e-12) & (times < hi - 1e-12)
        if mask.any():
            windows.append((lo, hi, rmse(track_err[mask]), rmse(model_err[mask])))

    return RunMetrics(
        eval_start=start,
        switch_time=cfg.task1_duration,
        windows=np.array(windows),
        table=table,
        pooled=pooled,
        deletions_by_rule=by_rule,
        step_time={"mean": float(step_walls.mean()), "median": float(np.median(step_walls)),
                   "max": float(step_walls.max())},
        update_times=np.array(update_times).reshape(-1, 4),
        min_update_variance=float(min_var),
        max_gram_residual=max_resid,
        n_gram_checks=n_checks,
    )


# ----------------------------------------------------------------------
# output


def _fmt(v):
    return "%.10g" % v


def write_csv(result, path):
    """Write ``trace.csv``, ``summary.csv`` and ``windows.csv`` into directory ``path``."""
    try:
        os.makedirs(path, exist_ok=True)
        n = len(result.config.kp)
        with open(os.path.join(path, "trace.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(trace_header(n))
            for row in result.trace:
                w.writerow([_fmt(v) for v in row])
        with open(os.path.join(path, "summary.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["task", "joint", "metric", "value"])
            for task in TASKS:
                for j in range(n):
                    for metric in SUMMARY_METRICS:
                        w.writerow([task, j + 1, metric, _fmt(result.metrics.table[task][metric][j])])
        with open(os.path.join(path, "windows.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_start", "t_end", "tracking_rmse", "modeling_rmse"])
            for row in result.metrics.windows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write results to {path!r}: {exc.strerror or exc}") from exc


def _run_scheme(cfg):
    try:
        return cfg.scheme, run_experiment(cfg), None
    except Exception as exc:  # one failing scheme must not sink the comparison
        logger.error("scheme %s failed: %s", cfg.scheme, exc)
        return cfg.scheme, None, f"{type(exc).__name__}: {exc}"


@dataclass
class Comparison:
    results: dict
    errors: dict
    winners: dict

    def table_rows(self):
        """Per-joint rows, then ``sum`` and ``pooled`` rows; one column per scheme and task."""
        schemes = [s for s in ("pis", "fs", "ops") if s in self.results]
        header = ["joint"] + [f"{s}_{task}" for s in schemes for task in TASKS]
        n = len(next(iter(self.results.values())).config.kp) if self.results else 0
        rows = []
        for j in range(n):
            rows.append([str(j + 1)] + [
                self.results[s].metrics.table[task]["tracking_rmse"][j] for s in schemes for task in TASKS
            ])
        rows.append(["sum"] + [
            float(np.sum(self.results[s].metrics.table[task]["tracking_rmse"])) for s in schemes for task in TASKS
        ])
        rows.append(["pooled"] + [self.results[s].metrics.pooled[task] for s in schemes for task in TASKS])
        return header, rows


def compare_schemes(base_cfg, out=None, jobs=1):
    """Run PIS, OPS and FS with otherwise identical settings and pick per-task winners.

    A scheme that fails is reported in ``errors`` while the others complete.
    """
    cfgs = [replace(base_cfg, scheme=s) for s in ("pis", "ops", "fs")]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_scheme, cfgs))
    else:
        outcomes = [_run_scheme(c) for c in cfgs]
    results = {s: r for s, r, _ in outcomes if r is not None}
    errors = {s: e for s, _, e in outcomes if e is not None}
    winners = {}
    for task in TASKS:
        if results:
            winners[task] = min(results, key=lambda s: (results[s].metrics.pooled[task], s))
    comp = Comparison(results, errors, winners)
    if out is not None:
        for s, r in results.items():
            write_csv(r, os.path.join(out, s))
        os.makedirs(out, exist_ok=True)
        header, rows = comp.table_rows()
        with open(os.path.join(out, "comparison.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([row[0]] + [_fmt(v) for v in row[1:]])
            for task in TASKS:
                if task in winners:
                    w.writerow([f"winner_{task}", winners[task]])
    return comp
