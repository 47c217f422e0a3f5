"""Numerical checks of the monotonicity inequalities, closed-form references for
GDA on the scalar bilinear quadratic, and bias/variance estimation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import JointPoint, check_dimensions
from .errors import DivergenceError, InputError
from .oracle import NoiseModel, NoisyOracle
from .solvers import run_ensemble

DEFAULT_TOLERANCE = 1e-9
BOX_RADIUS = 10.0
LEMMA_IDS = ("lemma1", "lemma2", "corollary1", "assumption2_certification")


@dataclass(frozen=True)
class LemmaReport:
    lemma: str
    num_samples: int
    max_violation: float
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def passed(self):
        return self.max_violation <= self.tolerance

    def to_dict(self):
        return {**asdict(self), "pass": self.passed}

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{self.lemma:<26} samples={self.num_samples:<6} "
            f"max_scaled_violation={self.max_violation:.3e}  {status}"
        )


def _center(problem):
    saddle = problem.saddle_point()
    return saddle.stacked if saddle is not None else np.zeros(problem.dim)


def _sample_box(problem, count, rng):
    return _center(problem) + rng.uniform(-BOX_RADIUS, BOX_RADIUS, size=(count, problem.dim))


def _rowdot(a, b):
    return np.einsum("...i,...i->...", a, b)


def monotonicity_terms(problem, z, zhat):
    """``(mu*d2, <dPhi, dz>, L*d2, |dPhi|^2)`` for a pair of points.

    Works on JointPoints or on raw stacked arrays with matching leading axes.
    """
    if isinstance(z, JointPoint):
        check_dimensions(problem, z)
        check_dimensions(problem, zhat)
        z, zhat = z.stacked, zhat.stacked
    dz = z - zhat
    dphi = problem.operator(z) - problem.operator(zhat)
    d2 = _rowdot(dz, dz)
    c = problem.constants
    return c.mu * d2, _rowdot(dphi, dz), c.L * d2, _rowdot(dphi, dphi)


def corollary1_form(problem, z):
    """Quadratic form ``mu |z-z*|^2 - 2 <z-z*, Phi(z)> + mu/(4L^2) |Phi(z)|^2`` (<= 0)."""
    saddle = problem.require_saddle().stacked
    if isinstance(z, JointPoint):
        check_dimensions(problem, z)
        z = z.stacked
    dz = z - saddle
    g = problem.operator(z)
    c = problem.constants
    return c.mu * _rowdot(dz, dz) - 2.0 * _rowdot(dz, g) + c.mu / (4 * c.L**2) * _rowdot(g, g)


def check_lemma1(problem, num_pairs=1000, seed=0, tolerance=DEFAULT_TOLERANCE):
    rng = np.random.default_rng(seed)
    z, zhat = _sample_box(problem, num_pairs, rng), _sample_box(problem, num_pairs, rng)
    lower, inner, upper, _ = monotonicity_terms(problem, z, zhat)
    raw = np.maximum(lower - inner, inner - upper)
    scaled = np.maximum(raw, 0.0) / (1.0 + np.abs(upper))
    return LemmaReport("lemma1", num_pairs, float(scaled.max(initial=0.0)), tolerance)


def check_lemma2(problem, num_pairs=1000, seed=0, tolerance=DEFAULT_TOLERANCE):
    rng = np.random.default_rng(seed)
    z, zhat = _sample_box(problem, num_pairs, rng), _sample_box(problem, num_pairs, rng)
    _, inner, _, dphi2 = monotonicity_terms(problem, z, zhat)
    c = problem.constants
    rhs = c.mu / (4 * c.L**2) * dphi2
    scaled = np.maximum(rhs - inner, 0.0) / (1.0 + np.maximum(np.abs(inner), rhs))
    return LemmaReport("lemma2", num_pairs, float(scaled.max(initial=0.0)), tolerance)


def check_corollary1(problem, num_points=1000, seed=0, tolerance=DEFAULT_TOLERANCE):
    problem.require_saddle()
    rng = np.random.default_rng(seed)
    z = _sample_box(problem, num_points, rng)
    form = corollary1_form(problem, z)
    g = problem.operator(z)
    dz = z - _center(problem)
    scale = 1.0 + problem.constants.mu * _rowdot(dz, dz) + 2.0 * np.abs(_rowdot(dz, g))
    scaled = np.maximum(form, 0.0) / scale
    return LemmaReport("corollary1", num_points, float(scaled.max(initial=0.0)), tolerance)


def certify_constants(problem, num_pairs=1000, seed=0, tolerance=DEFAULT_TOLERANCE):
    """Sample-based check that the declared block constants hold.

    Tests, on random pairs differing in one block, strong convexity in ``x``,
    strong concavity in ``y``, block smoothness and both cross-Lipschitz
    bounds.  Squared quantities are compared to avoid square roots.
    """
    rng = np.random.default_rng(seed)
    m, c = problem.m, problem.constants
    base = _sample_box(problem, num_pairs, rng)
    x, y = base[:, :m], base[:, m:]
    xh = _sample_box(problem, num_pairs, rng)[:, :m]
    yh = _sample_box(problem, num_pairs, rng)[:, m:]
    dx, dy = x - xh, y - yh
    dx2, dy2 = _rowdot(dx, dx), _rowdot(dy, dy)

    gx, gy = problem.grad_x(x, y), problem.grad_y(x, y)
    gx_xh, gy_xh = problem.grad_x(xh, y), problem.grad_y(xh, y)
    gx_yh, gy_yh = problem.grad_x(x, yh), problem.grad_y(x, yh)

    checks = []
    # strong convexity in x and concavity in y
    inner_x = _rowdot(gx - gx_xh, dx)
    checks.append((c.mu_x * dx2 - inner_x, 1 + c.L_x * dx2))
    inner_y = -_rowdot(gy - gy_yh, dy)
    checks.append((c.mu_y * dy2 - inner_y, 1 + c.L_y * dy2))
    # block smoothness
    diff = _rowdot(gx - gx_xh, gx - gx_xh)
    checks.append((diff - c.L_x**2 * dx2, 1 + c.L_x**2 * dx2))
    diff = _rowdot(gy - gy_yh, gy - gy_yh)
    checks.append((diff - c.L_y**2 * dy2, 1 + c.L_y**2 * dy2))
    # cross-Lipschitz
    diff = _rowdot(gx - gx_yh, gx - gx_yh)
    checks.append((diff - c.L_xy**2 * dy2, 1 + c.L_xy**2 * dy2))
    diff = _rowdot(gy - gy_xh, gy - gy_xh)
    checks.append((diff - c.L_yx**2 * dx2, 1 + c.L_yx**2 * dx2))

    worst = max(float(np.max(np.maximum(v, 0.0) / s)) for v, s in checks)
    return LemmaReport("assumption2_certification", num_pairs, worst, tolerance)


def run_all_checks(problem, num_samples=1000, seed=0):
    reports = [
        certify_constants(problem, num_samples, seed),
        check_lemma1(problem, num_samples, seed),
        check_lemma2(problem, num_samples, seed),
    ]
    if problem.has_known_saddle:
        reports.append(check_corollary1(problem, num_samples, seed))
    return reports


def gda_quadratic_exact_factor(mu, L, alpha):
    """Per-step factor ``(1 - alpha mu)^2 + alpha^2 L^2`` of noiseless GDA on the scalar bilinear quadratic."""
    if alpha < 0:
        raise InputError("alpha must be nonnegative")
    return (1.0 - alpha * mu) ** 2 + (alpha * L) ** 2


def gda_quadratic_stationary_mse(mu, L, alpha, sigma):
    """Fixed point ``2 alpha^2 sigma^2 / (1 - factor)`` of the expected squared error.

    Assumes independent ``N(0, sigma^2)`` noise on each of the two gradient
    coordinates.
    """
    factor = gda_quadratic_exact_factor(mu, L, alpha)
    if factor >= 1.0:
        raise DivergenceError(f"contraction factor {factor} >= 1: no stationary error")
    return 2.0 * alpha**2 * sigma**2 / (1.0 - factor)


def gda_stage_bound(k, mu, L, sigma, n1, p, initial_sq_dist):
    """Stage-end error bound of multistage GDA under the standard schedule."""
    kappa = L / mu
    return (
        math.exp(-n1 / (4 * kappa**2)) / 2 ** (p * (k - 1)) * initial_sq_dist
        + sigma**2 / (2**k * L**2)
    )


def ogda_stage_bound(k, mu, L, sigma, n1, p, initial_sq_dist):
    """Stage-end error bound of multistage OGDA under the standard schedule."""
    kappa = L / mu
    return (
        math.exp(-n1 / (8 * kappa)) / 2 ** (p * (k - 1)) * initial_sq_dist
        + sigma**2 / (2 ** (k - 1) * L * mu)
    )


@dataclass(frozen=True)
class BiasVarianceEstimate:
    iteration: int
    bias_sq: float
    total_mse: float
    variance_component: float
    num_replications: int
    standard_error: float

    def to_dict(self):
        return asdict(self)


def decompose(checkpoints, bias_values, replicate_values):
    """Bias/variance split from a noiseless run and a ``(checkpoints, R)`` error matrix."""
    replicate_values = np.asarray(replicate_values, dtype=np.float64)
    R = replicate_values.shape[1]
    if R < 2:
        raise InputError("need at least two replications")
    out = []
    for i, t in enumerate(checkpoints):
        sample = replicate_values[i]
        mse = float(sample.mean())
        bias = float(bias_values[i])
        se = float(sample.std(ddof=1) / math.sqrt(R))
        out.append(BiasVarianceEstimate(int(t), bias, mse, mse - bias, R, se))
    return out


def replication_oracles(problem, noise, num_replications, base_seed):
    root = NoisyOracle(problem, noise, base_seed)
    return [root.fork_stream(r) for r in range(num_replications)]


def estimate_bias_variance(
    problem, method, schedule, z0, sigma, num_replications, checkpoints, base_seed,
    noise_kind="block_isotropic_gaussian",
):
    """Bias as the error of the noiseless run, variance as the remaining mean error.

    Replication ``r`` draws from the substream ``(base_seed, r)``.  For OGDA
    the error is measured at ``w``.
    """
    if num_replications < 2:
        raise InputError("need at least two replications")
    problem.require_saddle()
    checkpoints = sorted(set(int(c) for c in checkpoints))
    clean = [NoisyOracle(problem, NoiseModel(noise_kind, 0.0), base_seed)]
    bias = run_ensemble(problem, z0, schedule, method, clean, checkpoints).values[:, 0]
    oracles = replication_oracles(problem, NoiseModel(noise_kind, sigma), num_replications, base_seed)
    noisy = run_ensemble(problem, z0, schedule, method, oracles, checkpoints)
    return decompose(checkpoints, bias, noisy.values)


def fit_linear_rate(trace, window=None):
    """Least-squares slope of ``log(sq_dist)`` against the global iteration.

    ``window = (start, end)`` restricts the fit to rows with
    ``start <= global_iter <= end`` (inclusive).
    """
    rows = list(trace)
    if window is not None:
        start, end = window
        rows = [r for r in rows if start <= r.global_iter <= end]
    if len(rows) < 2:
        raise InputError("need at least two trace rows in the window")
    values = [r.sq_dist for r in rows]
    if any(v is None or not v > 0 for v in values):
        raise InputError("squared distances must be present and positive in the window")
    t = np.array([r.global_iter for r in rows], dtype=np.float64)
    logs = np.log(np.array(values))
    slope = np.polyfit(t, logs, 1)[0]
    return float(slope)
