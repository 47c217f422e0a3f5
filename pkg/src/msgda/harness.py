"""Experiment configuration, execution and serialization.

Configs are JSON documents with an explicit ``schema_version``.  Every output
is a pure function of the config: no timestamps, hostnames or locale-dependent
formatting end up in traces or summaries.
"""

from __future__ import annotations

import copy
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import decompose, fit_linear_rate, replication_oracles
from .core import JointPoint
from .errors import ConfigError, InputError, MinimaxError
from .oracle import NOISE_KINDS, NoiseModel, NoisyOracle
from .problems import problem_from_dict
from .schedules import (
    StageSchedule,
    budgeted_schedule,
    check_stepsizes,
    constant_schedule,
    max_safe_stepsize,
    mgda_schedule,
    mogda_schedule,
    preset_n1,
    schedule_for_budget,
)
from .solvers import run_ensemble, run_multistage, step_rule

SCHEMA_VERSION = 1
TRACE_COLUMNS = ("global_iter", "stage", "inner_iter", "alpha", "sq_dist", "phi_norm")
METHOD_NAMES = ("gda", "ogda", "mgda", "mogda")
SWEEP_AXES = ("kappa", "sigma", "method")
DEFAULT_THRESHOLD = 1e-6


@dataclass
class ExperimentConfig:
    problem: dict
    method: str
    schedule: dict
    sigma: float = 0.0
    noise: str = "block_isotropic_gaussian"
    z0: Optional[list] = None
    num_replications: int = 1
    checkpoints: Optional[list] = None
    base_seed: int = 0
    threshold: Optional[float] = None
    allow_unsafe_stepsize: bool = False
    outputs: dict = field(default_factory=lambda: {"trace": "trace.csv", "summary": "summary.json"})
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.method not in METHOD_NAMES:
            raise ConfigError(f"method must be one of {METHOD_NAMES}, got {self.method!r}")
        if self.noise not in NOISE_KINDS:
            raise ConfigError(f"noise must be one of {NOISE_KINDS}, got {self.noise!r}")
        if not isinstance(self.schedule, dict) or "kind" not in self.schedule:
            raise ConfigError("schedule must be a mapping with a 'kind' key")
        if self.num_replications < 1:
            raise ConfigError("num_replications must be at least 1")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ConfigError("sigma must be a finite nonnegative number")
        if not 0 <= self.base_seed < 2**64:
            raise ConfigError("base_seed must fit in an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**copy.deepcopy(data))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return ExperimentConfig.from_dict(data)

    def config_hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return ExperimentConfig.from_dict(data)


def dump_config(config):
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


def expand_schedule(spec, method, constants):
    """Turn a schedule spec from the config into an explicit :class:`StageSchedule`."""
    mu, L = constants.mu, constants.L
    kind = spec.get("kind")
    try:
        if kind == "explicit":
            return StageSchedule(tuple(tuple(s) for s in spec["stages"]), "custom")
        if kind == "constant":
            alpha = spec.get("alpha")
            if alpha is None:
                alpha = max_safe_stepsize(method, mu, L)
            return constant_schedule(alpha, int(spec["n_steps"]))
        if kind in ("eq14", "eq23"):
            build = mgda_schedule if kind == "eq14" else mogda_schedule
            return build(mu, L, spec.get("p", 2.0), int(spec["n1"]), int(spec["num_stages"]))
        if kind == "budget":
            return budgeted_schedule(method, mu, L, int(spec["n"]), spec.get("C", 2.0))
        if kind == "horizon_free":
            p = spec.get("p", 2.0)
            n1 = preset_n1(method, "horizon_free", mu, L, p)
            if "n" in spec:
                return schedule_for_budget(method, mu, L, int(spec["n"]), p, n1)
            build = mgda_schedule if step_rule(method) == "gda" else mogda_schedule
            return build(mu, L, p, n1, int(spec["num_stages"]))
    except KeyError as exc:
        raise ConfigError(f"schedule of kind {kind!r} is missing {exc}") from None
    except MinimaxError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown schedule kind {kind!r}")


def default_checkpoints(schedule):
    """Iteration 0, every stage end and every power of two up to the horizon."""
    total = schedule.total
    points = {0, *schedule.stage_ends()}
    k = 1
    while k <= total:
        points.add(k)
        k *= 2
    return sorted(points)


def _initial_point(config, problem):
    if config.z0 is None:
        return JointPoint(np.ones(problem.m), np.ones(problem.n))
    z0 = config.z0
    if isinstance(z0, dict):
        return JointPoint(z0["x"], z0["y"])
    if len(z0) != problem.dim:
        raise ConfigError(f"z0 has {len(z0)} entries, problem needs {problem.dim}")
    return JointPoint.from_stacked(z0, problem.m)


@dataclass
class ExperimentResult:
    trace: object
    summary: dict
    schedule: StageSchedule


def prepare(config):
    """Problem, expanded schedule and starting point for a config."""
    try:
        problem = problem_from_dict(config.problem)
    except MinimaxError as exc:
        raise ConfigError(f"invalid problem: {exc}") from None
    schedule = expand_schedule(config.schedule, config.method, problem.constants)
    check_stepsizes(
        schedule, config.method, problem.constants.mu, problem.constants.L,
        allow_unsafe=config.allow_unsafe_stepsize,
    )
    try:
        z0 = _initial_point(config, problem)
    except InputError as exc:
        raise ConfigError(f"invalid z0: {exc}") from None
    return problem, schedule, z0


def _first_below(trace, threshold):
    for row in trace:
        if row.sq_dist is not None and row.sq_dist <= threshold:
            return row.global_iter
    return None


def run_experiment(config):
    problem, schedule, z0 = prepare(config)
    noise = NoiseModel(config.noise, config.sigma)
    oracle = NoisyOracle(problem, noise, config.base_seed).fork_stream(0)
    _, trace = run_multistage(z0, oracle, schedule, config.method)

    threshold = config.threshold if config.threshold is not None else DEFAULT_THRESHOLD
    last = trace[-1]
    hit = _first_below(trace, threshold)
    rate = None
    if problem.has_known_saddle:
        try:
            rate = fit_linear_rate(trace, (0, hit if hit else schedule.total))
        except InputError:
            rate = None

    results = {
        "iterations": schedule.total,
        "initial_sq_dist": trace[0].sq_dist,
        "final_sq_dist": last.sq_dist,
        "final_phi_norm": last.phi_norm,
        "threshold": threshold,
        "iterations_to_threshold": hit,
        "fitted_rate": rate,
    }

    summary = {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "base_seed": config.base_seed,
        "problem": {
            "m": problem.m,
            "n": problem.n,
            "constants": problem.constants.to_dict(),
            "mu": problem.constants.mu,
            "L": problem.constants.L,
            "kappa": problem.constants.kappa,
            "saddle": problem.saddle_point().to_list() if problem.has_known_saddle else None,
        },
        "noise": {"kind": noise.kind, "sigma": noise.sigma},
        "schedule": schedule.to_dict(),
        "results": results,
    }

    if config.num_replications > 1 and problem.has_known_saddle:
        checkpoints = config.checkpoints or default_checkpoints(schedule)
        clean = [NoisyOracle(problem, NoiseModel(config.noise, 0.0), config.base_seed)]
        bias = run_ensemble(problem, z0, schedule, config.method, clean, checkpoints)
        oracles = replication_oracles(problem, noise, config.num_replications, config.base_seed)
        noisy = run_ensemble(problem, z0, schedule, config.method, oracles, checkpoints,
                             track_mean=True)
        estimates = decompose(noisy.checkpoints, bias.values[:, 0], noisy.values)
        half = schedule.total // 2
        results["tail_mean_sq_dist"] = float(noisy.mean_path[half + 1 :].mean())
        summary["bias_variance"] = [e.to_dict() for e in estimates]

    return ExperimentResult(trace, summary, schedule)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % value


def trace_csv(trace):
    buf = io.StringIO()
    buf.write(",".join(TRACE_COLUMNS) + "\n")
    for row in trace:
        buf.write(",".join(_fmt(getattr(row, c)) for c in TRACE_COLUMNS) + "\n")
    return buf.getvalue()


def trace_json(trace):
    rows = [{c: getattr(r, c) for c in TRACE_COLUMNS} for r in trace]
    return json.dumps(rows, indent=1) + "\n"


def read_trace_csv(path):
    """Parse a trace CSV back into dictionaries (``sq_dist`` is ``None`` when empty)."""
    out = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != TRACE_COLUMNS:
            raise InputError(f"unexpected trace header {header}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            out.append({
                "global_iter": int(parts[0]),
                "stage": int(parts[1]),
                "inner_iter": int(parts[2]),
                "alpha": float(parts[3]),
                "sq_dist": float(parts[4]) if parts[4] else None,
                "phi_norm": float(parts[5]),
            })
    return out


def summary_json(summary):
    return json.dumps(summary, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_outputs(result, config, out_dir, trace_format="csv"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_name = config.outputs.get("trace", "trace.csv")
    if trace_format == "json":
        trace_name = str(Path(trace_name).with_suffix(".json"))
        text = trace_json(result.trace)
    else:
        text = trace_csv(result.trace)
    trace_path = out / trace_name
    summary_path = out / config.outputs.get("summary", "summary.json")
    trace_path.write_text(text, encoding="utf-8", newline="\n")
    summary_path.write_text(summary_json(result.summary), encoding="utf-8", newline="\n")
    return trace_path, summary_path


def _apply_axis(config, axis, value):
    if axis == "sigma":
        return config.replace(sigma=float(value))
    if axis == "method":
        return config.replace(method=str(value))
    if axis == "kappa":
        problem = dict(config.problem)
        if problem.get("kind") not in ("bilinear_scalar", "random_quadratic"):
            raise ConfigError("kappa sweeps need a bilinear_scalar or random_quadratic problem")
        problem["L"] = float(value) * float(problem["mu"])
        return config.replace(problem=problem)
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def _loglog_slope(xs, ys):
    pairs = [(x, y) for x, y in zip(xs, ys) if y is not None and y > 0 and x > 0]
    if len(pairs) < 2:
        return None
    lx, ly = np.log([p[0] for p in pairs]), np.log([p[1] for p in pairs])
    return float(np.polyfit(lx, ly, 1)[0])


def run_sweep(template, axis, values):
    """One experiment per value along ``axis``; failures are recorded, not raised.

    Returns ``(summary, failures)`` where ``failures`` lists the exceptions.
    """
    if not values:
        raise ConfigError("sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    runs, failures = [], []
    for value in values:
        entry = {"value": value}
        try:
            cfg = _apply_axis(template, axis, value)
            result = run_experiment(cfg)
            res = result.summary["results"]
            entry.update({
                "config_hash": result.summary["config_hash"],
                "iterations_to_threshold": res["iterations_to_threshold"],
                "fitted_rate": res["fitted_rate"],
                "final_sq_dist": res["final_sq_dist"],
                "tail_mean_sq_dist": res.get("tail_mean_sq_dist"),
                "error": None,
            })
        except MinimaxError as exc:
            failures.append(exc)
            entry["error"] = {"type": type(exc).__name__, "message": str(exc),
                              "exit_code": exc.exit_code}
        runs.append(entry)

    summary = {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "template": template.to_dict(),
        "template_hash": template.config_hash(),
        "base_seed": template.base_seed,
        "axis": axis,
        "runs": runs,
    }
    if axis in ("kappa", "sigma"):
        xs = [float(r["value"]) for r in runs]
        summary["loglog_slope_iterations"] = _loglog_slope(
            xs, [r.get("iterations_to_threshold") for r in runs])
        summary["loglog_slope_tail_mse"] = _loglog_slope(
            xs, [r.get("tail_mean_sq_dist") for r in runs])
    return summary, failures
