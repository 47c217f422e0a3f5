"""Multistage stepsize/stage-length schedules and the global iteration map.

Stage ``k`` runs ``n_k`` steps at stepsize ``alpha_k``.  After the first
stage every stage halves the stepsize and doubles the length, which is what
drives the noise-induced error down geometrically.  Global iterations are
numbered ``1 .. T(K)`` across stages, with ``T(k) = n_1 + ... + n_k``.
"""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field

from .errors import InputError, UnsafeStepsizeError

LOG2 = math.log(2.0)
PROVENANCES = ("mgda_eq14", "mogda_eq23", "budgeted", "custom")


def guarded_ceil(value, tol=1e-9):
    """Ceiling that treats values within ``tol`` of an integer as that integer."""
    nearest = round(value)
    if abs(value - nearest) <= tol:
        return int(nearest)
    return int(math.ceil(value))


@dataclass(frozen=True)
class StageSchedule:
    stages: tuple
    provenance: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        stages = tuple((float(a), int(n)) for a, n in self.stages)
        if not stages:
            raise InputError("schedule needs at least one stage")
        for k, (alpha, length) in enumerate(stages, start=1):
            if not (alpha > 0 and math.isfinite(alpha)):
                raise InputError(f"stage {k}: stepsize must be positive, got {alpha}")
            if length < 1:
                raise InputError(f"stage {k}: length must be at least 1, got {length}")
        if self.provenance not in PROVENANCES:
            raise InputError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "stages", stages)
        object.__setattr__(self, "params", dict(self.params))
        ends = []
        total = 0
        for _, length in stages:
            total += length
            ends.append(total)
        object.__setattr__(self, "_ends", tuple(ends))

    @property
    def num_stages(self):
        return len(self.stages)

    @property
    def alphas(self):
        return [a for a, _ in self.stages]

    @property
    def lengths(self):
        return [n for _, n in self.stages]

    @property
    def total(self):
        return self._ends[-1]

    def cumulative_length(self, k):
        """``T(k)``; ``T(0) = 0``."""
        if not 0 <= k <= self.num_stages:
            raise InputError(f"stage index {k} outside 0..{self.num_stages}")
        return 0 if k == 0 else self._ends[k - 1]

    def stage_ends(self):
        return list(self._ends)

    def rows(self):
        """``(k, alpha_k, n_k, T(k))`` for every stage."""
        return [(k, a, n, t) for k, ((a, n), t) in enumerate(zip(self.stages, self._ends), start=1)]

    def table(self):
        lines = [f"{'k':>4}  {'alpha_k':>24}  {'n_k':>10}  {'T(k)':>10}"]
        for k, a, n, t in self.rows():
            lines.append(f"{k:>4}  {a!r:>24}  {n:>10}  {t:>10}")
        return "\n".join(lines)

    def to_dict(self):
        return {
            "provenance": self.provenance,
            "params": dict(self.params),
            "stages": [
                {"stage": k, "alpha": a, "n": n, "T": t} for k, a, n, t in self.rows()
            ],
        }

    @classmethod
    def from_dict(cls, data):
        stages = [(s["alpha"], s["n"]) for s in data["stages"]]
        return cls(tuple(stages), data.get("provenance", "custom"), data.get("params", {}))


def _check_common(mu, L, p, n1, num_stages):
    if not 0 < mu <= L:
        raise InputError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if p < 2:
        raise InputError(f"p must be at least 2, got {p}")
    if n1 < 1:
        raise InputError(f"n1 must be at least 1, got {n1}")
    if num_stages < 1:
        raise InputError(f"num_stages must be at least 1, got {num_stages}")


def mgda_stage(k, mu, L, p):
    """``(alpha_k, n_k)`` of the multistage GDA schedule for ``k >= 2``."""
    kappa = L / mu
    return mu / (L**2 * 2 ** (k + 2)), guarded_ceil(p * 2 ** (k + 2) * kappa**2 * LOG2)


def mogda_stage(k, mu, L, p):
    """``(alpha_k, n_k)`` of the multistage OGDA schedule for ``k >= 2``."""
    kappa = L / mu
    return 1.0 / (L * 2 ** (k + 3)), guarded_ceil(p * 2 ** (k + 3) * kappa * LOG2)


def mgda_schedule(mu, L, p, n1, num_stages):
    _check_common(mu, L, p, n1, num_stages)
    stages = [(mu / (4 * L**2), int(n1))]
    stages += [mgda_stage(k, mu, L, p) for k in range(2, num_stages + 1)]
    return StageSchedule(tuple(stages), "mgda_eq14", {"mu": mu, "L": L, "p": p, "n1": int(n1)})


def mogda_schedule(mu, L, p, n1, num_stages):
    _check_common(mu, L, p, n1, num_stages)
    stages = [(1.0 / (8 * L), int(n1))]
    stages += [mogda_stage(k, mu, L, p) for k in range(2, num_stages + 1)]
    return StageSchedule(tuple(stages), "mogda_eq23", {"mu": mu, "L": L, "p": p, "n1": int(n1)})


def _method_family(method):
    if method in ("gda", "mgda"):
        return "gda"
    if method in ("ogda", "mogda"):
        return "ogda"
    raise InputError(f"unknown method {method!r}")


def preset_n1(method, mode, mu, L, p=2.0, n=None, C=None):
    """First-stage length for the two standard regimes.

    ``mode="budget"``: the horizon ``n`` is known; returns ``ceil(n / C)``.
    ``mode="horizon_free"``: returns ``ceil(4 p k^2 log(p k^2))`` for GDA and
    ``ceil(8 p k log(p k^2))`` for OGDA, where ``k`` is the condition number.
    """
    family = _method_family(method)
    if not 0 < mu <= L:
        raise InputError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    kappa = L / mu
    if mode == "budget":
        if n is None or C is None:
            raise InputError("budget mode needs n and C")
        if C < 2:
            raise InputError(f"C must be at least 2, got {C}")
        threshold = 2 * kappa**2 if family == "gda" else 2 * kappa
        if n < threshold:
            bound = "2*kappa^2" if family == "gda" else "2*kappa"
            raise InputError(f"budget n={n} is below {bound} = {threshold:g}")
        return guarded_ceil(n / C)
    if mode == "horizon_free":
        if p < 2:
            raise InputError(f"p must be at least 2, got {p}")
        if family == "gda":
            return guarded_ceil(4 * p * kappa**2 * math.log(p * kappa**2))
        return guarded_ceil(8 * p * kappa * math.log(p * kappa**2))
    raise InputError(f"unknown n1 mode {mode!r}")


def multistage_schedule(method, mu, L, p, n1, num_stages):
    if _method_family(method) == "gda":
        return mgda_schedule(mu, L, p, n1, num_stages)
    return mogda_schedule(mu, L, p, n1, num_stages)


def schedule_for_budget(method, mu, L, n, p=2.0, n1=None):
    """Stages generated until they cover ``n`` iterations, then clipped to ``n``."""
    if n < 1:
        raise InputError("budget must be at least 1")
    if n1 is None:
        raise InputError("n1 is required")
    next_stage = mgda_stage if _method_family(method) == "gda" else mogda_stage
    base = multistage_schedule(method, mu, L, p, n1, 1)
    stages = list(base.stages)
    total = stages[0][1]
    k = 1
    while total < n:
        k += 1
        stage = next_stage(k, mu, L, p)
        stages.append(stage)
        total += stage[1]
    full = StageSchedule(tuple(stages), "budgeted", {**base.params, "budget": int(n)})
    return truncate_to_budget(full, n)


def budgeted_schedule(method, mu, L, n, C=2.0):
    """Known-horizon preset: ``p = 2`` and ``n1 = ceil(n / C)``."""
    n1 = preset_n1(method, "budget", mu, L, n=n, C=C)
    sched = schedule_for_budget(method, mu, L, n, p=2.0, n1=n1)
    return StageSchedule(sched.stages, "budgeted", {**sched.params, "C": C})


def locate(schedule, global_n):
    """Map a global iteration to ``(stage, inner)`` with ``1 <= inner <= n_stage``."""
    if not 1 <= global_n <= schedule.total:
        raise InputError(f"global iteration {global_n} outside 1..{schedule.total}")
    k = bisect.bisect_left(schedule.stage_ends(), global_n) + 1
    return k, global_n - schedule.cumulative_length(k - 1)


def global_index(schedule, stage, inner):
    """Inverse of :func:`locate`."""
    if not 1 <= stage <= schedule.num_stages:
        raise InputError(f"stage {stage} outside 1..{schedule.num_stages}")
    if not 1 <= inner <= schedule.stages[stage - 1][1]:
        raise InputError(f"inner iteration {inner} outside stage {stage}")
    return schedule.cumulative_length(stage - 1) + inner


def truncate_to_budget(schedule, n):
    """Drop trailing stages and clip the last one so the schedule has exactly ``n`` steps."""
    if n < 1:
        raise InputError("budget must be at least 1")
    if n > schedule.total:
        raise InputError(f"schedule has only {schedule.total} steps, cannot extend to {n}")
    if n == schedule.total:
        return schedule
    k, inner = locate(schedule, n)
    stages = list(schedule.stages[: k - 1]) + [(schedule.stages[k - 1][0], inner)]
    return StageSchedule(tuple(stages), schedule.provenance, schedule.params)


def constant_schedule(alpha, n_steps):
    return StageSchedule(((alpha, n_steps),), "custom", {})


def max_safe_stepsize(method, mu, L):
    """Largest stepsize covered by the convergence theorems: ``mu/(4L^2)`` or ``1/(8L)``."""
    if _method_family(method) == "gda":
        return mu / (4 * L**2)
    return 1.0 / (8 * L)


def check_stepsizes(schedule, method, mu, L, allow_unsafe=False):
    """Raise (or, with ``allow_unsafe``, warn) when a stage exceeds the safe stepsize.

    Returns the list of offending stage indices.
    """
    limit = max_safe_stepsize(method, mu, L)
    bound = "mu/(4L^2)" if _method_family(method) == "gda" else "1/(8L)"
    bad = [k for k, a in enumerate(schedule.alphas, start=1) if a > limit * (1 + 1e-12)]
    if bad:
        msg = (
            f"stepsize of stage(s) {bad} exceeds the {bound} bound "
            f"({limit!r}) for {_method_family(method).upper()}"
        )
        if not allow_unsafe:
            raise UnsafeStepsizeError(msg + "; pass allow_unsafe_stepsize to run anyway")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return bad
