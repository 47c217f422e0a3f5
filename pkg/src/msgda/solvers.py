"""Stochastic GDA and OGDA drivers, single-stage and multistage.

GDA:  ``z <- z - alpha * phi~(z)`` (one oracle call per step).

OGDA, written with an anchor ``w`` and an extrapolated point ``z``::

    z' = w - alpha * phi~(z)
    w' = w - alpha * phi~(z')

Two oracle calls per step, always in this order.  For OGDA the reported
iterate is ``w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .core import JointPoint, check_dimensions
from .errors import CapabilityError, DivergenceError, InputError

BLOWUP_FACTOR = 1e12
METHODS = ("gda", "ogda")
_ALIASES = {"gda": "gda", "mgda": "gda", "ogda": "ogda", "mogda": "ogda"}
_CHUNK = 1024  # oracle calls per noise refill; even, so OGDA never strands a draw


def step_rule(method):
    """Normalise ``gda/mgda/ogda/mogda`` to the underlying step rule."""
    try:
        return _ALIASES[method]
    except KeyError:
        raise InputError(f"unknown method {method!r}; expected one of {sorted(_ALIASES)}") from None


@dataclass(frozen=True)
class GdaState:
    z: JointPoint
    global_iter: int = 0

    @property
    def point(self):
        return self.z


@dataclass(frozen=True)
class OgdaState:
    w: JointPoint
    z: JointPoint
    global_iter: int = 0

    def __post_init__(self):
        if not self.w.same_shape(self.z):
            raise InputError("w and z must have identical dimensions")

    @classmethod
    def start(cls, z0):
        return cls(w=z0, z=z0, global_iter=0)

    @property
    def point(self):
        return self.w


def initial_state(method, z0):
    return GdaState(z0) if step_rule(method) == "gda" else OgdaState.start(z0)


class TraceRow(NamedTuple):
    global_iter: int
    stage: int
    inner_iter: int
    alpha: float
    sq_dist: Optional[float]
    phi_norm: float
    z_sq_dist: Optional[float] = None


@dataclass
class Trace:
    """Per-iterate records of a run.

    ``sq_dist`` is the squared distance of the reported iterate to the saddle
    (``None`` when the saddle is unknown); ``z_sq_dist`` is only filled for
    OGDA and tracks the extrapolated point.
    """

    rows: list = field(default_factory=list)

    def append(self, row):
        if self.rows:
            last = self.rows[-1]
            if row.global_iter != last.global_iter + 1:
                raise InputError(
                    f"trace rows must be contiguous: {last.global_iter} then {row.global_iter}"
                )
            if row.stage < last.stage:
                raise InputError("stage index decreased")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __getitem__(self, idx):
        return self.rows[idx]

    def column(self, name):
        return [getattr(r, name) for r in self.rows]

    def sq_dists(self):
        values = self.column("sq_dist")
        if any(v is None for v in values):
            raise CapabilityError("trace has no distances to the saddle")
        return np.array(values)

    def iterations(self):
        return np.array(self.column("global_iter"))


def _divergence(message, global_iter, iterate):
    return DivergenceError(f"{message} at global iteration {global_iter}", global_iter, iterate)


def _advance(point, direction, alpha, global_iter):
    new = point.stacked - alpha * direction
    if not np.all(np.isfinite(new)):
        raise _divergence("non-finite iterate", global_iter, new)
    return JointPoint.from_stacked(new, point.m)


def gda_step(state, oracle, alpha):
    if alpha < 0:
        raise InputError(f"stepsize must be nonnegative, got {alpha}")
    check_dimensions(oracle.problem, state.z)
    g = oracle.sample_phi(state.z)
    z = _advance(state.z, g, alpha, state.global_iter + 1)
    return GdaState(z, state.global_iter + 1)


def ogda_step(state, oracle, alpha):
    if alpha < 0:
        raise InputError(f"stepsize must be nonnegative, got {alpha}")
    check_dimensions(oracle.problem, state.w)
    k = state.global_iter + 1
    z = _advance(state.w, oracle.sample_phi(state.z), alpha, k)
    w = _advance(state.w, oracle.sample_phi(z), alpha, k)
    return OgdaState(w, z, k)


def _step_fn(method, state):
    rule = step_rule(method)
    expected = GdaState if rule == "gda" else OgdaState
    if not isinstance(state, expected):
        raise InputError(f"method {method!r} needs a {expected.__name__}, got {type(state).__name__}")
    return gda_step if rule == "gda" else ogda_step


def make_row(problem, state, stage, inner, alpha):
    saddle = problem.saddle_point()
    point = state.point
    sq = z_sq = None
    if saddle is not None:
        sq = float(np.sum((point.stacked - saddle.stacked) ** 2))
        if isinstance(state, OgdaState):
            z_sq = float(np.sum((state.z.stacked - saddle.stacked) ** 2))
    phi_norm = float(np.linalg.norm(problem.operator(point.stacked)))
    return TraceRow(state.global_iter, stage, inner, float(alpha), sq, phi_norm, z_sq)


def run_stage(state, oracle, alpha, n_steps, method, trace=None, stage=1, reference_sq_dist=None):
    """Run ``n_steps`` steps at a constant stepsize, appending one trace row per step.

    ``reference_sq_dist`` is the starting error used for blow-up detection; it
    defaults to the error of ``state``.
    """
    if n_steps < 1:
        raise InputError(f"n_steps must be at least 1, got {n_steps}")
    step = _step_fn(method, state)
    problem = oracle.problem
    saddle = problem.saddle_point()
    if reference_sq_dist is None and saddle is not None:
        reference_sq_dist = float(np.sum((state.point.stacked - saddle.stacked) ** 2))
    limit = BLOWUP_FACTOR * reference_sq_dist if reference_sq_dist else None

    for inner in range(1, n_steps + 1):
        state = step(state, oracle, alpha)
        row = make_row(problem, state, stage, inner, alpha)
        if limit is not None and row.sq_dist > limit:
            raise _divergence("squared distance exceeded 1e12 x its initial value",
                              state.global_iter, state.point.stacked)
        if trace is not None:
            trace.append(row)
    return state


def run_multistage(z0, oracle, schedule, method):
    """Run every stage of ``schedule`` in turn, carrying the last iterate forward.

    Returns ``(final_state, trace)``; the trace starts with the row of ``z0``
    (global iteration 0, stage 1, inner 0).
    """
    problem = oracle.problem
    check_dimensions(problem, z0)
    state = initial_state(method, z0)
    trace = Trace()
    first_alpha = schedule.stages[0][0]
    trace.append(make_row(problem, state, 1, 0, first_alpha))
    reference = trace[0].sq_dist
    for k, (alpha, length) in enumerate(schedule.stages, start=1):
        state = run_stage(state, oracle, alpha, length, method, trace, stage=k,
                          reference_sq_dist=reference)
    return state, trace


@dataclass
class EnsembleResult:
    """Squared errors of many replications recorded at chosen iterations.

    ``values[i, r]`` is the error of replication ``r`` at ``checkpoints[i]``.
    ``mean_path[t]`` (when tracked) is the replication mean at iteration ``t``.
    """

    checkpoints: list
    values: np.ndarray
    mean_path: Optional[np.ndarray]
    final: np.ndarray


def run_ensemble(problem, z0, schedule, method, oracles, checkpoints=(), track_mean=False):
    """Advance one trajectory per oracle in lockstep on stacked arrays.

    Each row uses exactly the oracle draws and arithmetic of
    :func:`run_multistage` with the same oracle, so row ``r`` reproduces the
    single run bit for bit.  Needs a problem with a known saddle.
    """
    rule = step_rule(method)
    check_dimensions(problem, z0)
    saddle = problem.require_saddle().stacked
    if not oracles:
        raise InputError("need at least one oracle")
    for o in oracles:
        if o.problem is not problem:
            raise InputError("all oracles must wrap the given problem")
    total = schedule.total
    checkpoints = sorted(set(int(c) for c in checkpoints))
    if checkpoints and not (0 <= checkpoints[0] and checkpoints[-1] <= total):
        raise InputError(f"checkpoints must lie in 0..{total}")

    R, d = len(oracles), problem.dim
    calls_per_step = 1 if rule == "gda" else 2
    noisy = any(o.sigma > 0 for o in oracles)

    Z = np.tile(z0.stacked, (R, 1))
    W = Z.copy()
    reported = Z if rule == "gda" else W

    def sq_err(P):
        return np.sum((P - saddle) ** 2, axis=-1)

    values = np.empty((len(checkpoints), R))
    cp_pos = {c: i for i, c in enumerate(checkpoints)}
    mean_path = np.empty(total + 1) if track_mean else None

    err = sq_err(reported)
    reference = err[0]
    limit = BLOWUP_FACTOR * reference if reference > 0 else np.inf
    if 0 in cp_pos:
        values[cp_pos[0]] = err
    if track_mean:
        mean_path[0] = err.mean()

    noise = None
    used = _CHUNK
    t = 0
    for alpha, length in schedule.stages:
        for _ in range(length):
            t += 1
            if noisy:
                if used + calls_per_step > _CHUNK:
                    noise = np.ascontiguousarray(
                        np.stack([o.next_noise(_CHUNK) for o in oracles]).transpose(1, 0, 2)
                    )
                    used = 0
            if rule == "gda":
                G = problem.operator(Z)
                if noisy:
                    G = G + noise[used]
                    used += 1
                Z = Z - alpha * G
                reported = Z
            else:
                G = problem.operator(Z)
                if noisy:
                    G = G + noise[used]
                Z = W - alpha * G
                G = problem.operator(Z)
                if noisy:
                    G = G + noise[used + 1]
                    used += 2
                W = W - alpha * G
                reported = W
            err = sq_err(reported)
            bad = ~np.isfinite(err) | (err > limit)
            if rule == "ogda":
                bad |= ~np.all(np.isfinite(Z), axis=-1)
            if bad.any():
                failed = np.flatnonzero(bad).tolist()
                raise DivergenceError(
                    f"replications {failed} diverged at global iteration {t}",
                    t, reported[failed[0]].copy(), replications=failed,
                )
            if t in cp_pos:
                values[cp_pos[t]] = err
            if track_mean:
                mean_path[t] = err.mean()
    return EnsembleResult(checkpoints, values, mean_path, reported.copy())
