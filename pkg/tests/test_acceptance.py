"""Acceptance checks, one test per criterion.

Each test records a ``criterion N: PASS|FAIL`` line; the lines are printed
as they happen (visible with ``-s``) and repeated in the terminal summary.
Run with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math
import time

import numpy as np
import pytest

from msgda import (
    JointPoint,
    NoiseModel,
    NoisyOracle,
    ScalarBilinearQuadratic,
    StageSchedule,
    locate,
    mgda_schedule,
    mogda_schedule,
    random_quadratic,
    run_multistage,
)
from msgda.analysis import (
    check_corollary1,
    check_lemma1,
    check_lemma2,
    estimate_bias_variance,
    gda_quadratic_stationary_mse,
    gda_stage_bound,
    replication_oracles,
)
from msgda.cli import main
from msgda.schedules import constant_schedule, global_index, preset_n1
from msgda.solvers import run_ensemble

RESULTS = []


def report(number, passed, detail, elapsed, limit):
    ok = passed and elapsed < limit
    line = (f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}  "
            f"[{elapsed:.2f}s, limit {limit:g}s]")
    RESULTS.append(line)
    print(line)
    return ok


def clean_oracle(problem):
    return NoisyOracle(problem, NoiseModel(sigma=0.0), 0)


def test_criterion_1_exact_gda_contraction():
    start = time.perf_counter()
    worst_dev, above_floor = 0.0, True
    for L in (1.0, 2.0, 4.0):
        problem = ScalarBilinearQuadratic(1.0, L)
        kappa = L
        alpha = 1.0 / (1.0 + L**2)
        _, trace = run_multistage(JointPoint([1.0], [1.0]), clean_oracle(problem),
                                  constant_schedule(alpha, 200), "gda")
        d = trace.sq_dists()
        d = d[d > 1e-280]
        ratios = d[1:] / d[:-1]
        worst_dev = max(worst_dev, float(np.max(np.abs(ratios - (1 - 1 / (1 + kappa**2))))))
        above_floor &= bool(np.all(ratios >= 1 - 1 / kappa**2))
    elapsed = time.perf_counter() - start
    ok = report(1, worst_dev <= 1e-10 and above_floor,
                f"max |ratio - (1 - 1/(1+k^2))| = {worst_dev:.2e}, ratio >= 1 - 1/k^2: {above_floor}",
                elapsed, 1)
    assert ok


def test_criterion_2_stochastic_gda_neighborhood():
    start = time.perf_counter()
    mu, L, alpha, sigma, R, T = 1.0, 2.0, 1 / 16, 1.0, 100, 100_000
    problem = ScalarBilinearQuadratic(mu, L)
    oracles = replication_oracles(problem, NoiseModel("per_coordinate_gaussian", sigma), R, 2718)
    res = run_ensemble(problem, JointPoint([1.0], [1.0]), constant_schedule(alpha, T), "gda",
                       oracles, track_mean=True)
    tail = float(res.mean_path[T - 50_000 + 1:].mean())
    target = gda_quadratic_stationary_mse(mu, L, alpha, sigma)
    ceiling = 2 * alpha * sigma**2 / mu
    elapsed = time.perf_counter() - start
    ok = report(2, abs(tail - target) <= 0.1 * target and tail <= ceiling,
                f"tail mean {tail:.6f} vs stationary {target:.6f} (rel {abs(tail / target - 1):.2%}), "
                f"ceiling {ceiling}", elapsed, 30)
    assert ok


MU, L, P, N1, SIGMA, REPS, STAGES = 1.0, 2.0, 2, 20, 1.0, 200, 9
Z0 = JointPoint([1.0], [1.0])


def _stage_estimates(method):
    problem = ScalarBilinearQuadratic(MU, L)
    build = mgda_schedule if method == "mgda" else mogda_schedule
    schedule = build(MU, L, P, N1, STAGES)
    ends = schedule.stage_ends()
    est = estimate_bias_variance(problem, method, schedule, Z0, SIGMA, REPS, ends, base_seed=12345)
    return schedule, est


@pytest.fixture(scope="module")
def mgda_run():
    start = time.perf_counter()
    schedule, est = _stage_estimates("mgda")
    return schedule, est, time.perf_counter() - start


def test_criterion_3_stage_bounds(mgda_run):
    _, est, elapsed = mgda_run
    start = time.perf_counter()
    kappa = L / MU
    lines, ok = [], True
    for k in range(1, 7):
        e = est[k - 1]
        bound = gda_stage_bound(k, MU, L, SIGMA, N1, P, Z0.stacked @ Z0.stacked)
        ok &= e.total_mse <= bound + 3 * e.standard_error
        lines.append(f"k={k}: {e.total_mse:.3e} <= {bound:.3e}")
    elapsed += time.perf_counter() - start
    assert kappa == 2.0
    ok = report(3, ok, "; ".join(lines), elapsed, 120)
    assert ok


def _halving_run(est):
    """Longest run of consecutive stage-to-stage variance ratios in [0.3, 0.8]
    among stage ends where the bias is below 1% of the total error."""
    ratios, best, current = [], 0, 0
    for prev, cur in zip(est, est[1:]):
        if not (prev.bias_sq < 0.01 * prev.total_mse and cur.bias_sq < 0.01 * cur.total_mse):
            current = 0
            continue
        r = cur.variance_component / prev.variance_component
        ratios.append(r)
        current = current + 1 if 0.3 <= r <= 0.8 else 0
        best = max(best, current)
    return ratios, best


def test_criterion_4_variance_halving(mgda_run):
    _, est_gda, elapsed = mgda_run
    start = time.perf_counter()
    _, est_ogda = _stage_estimates("mogda")
    elapsed += time.perf_counter() - start
    r_gda, run_gda = _halving_run(est_gda)
    r_ogda, run_ogda = _halving_run(est_ogda)
    detail = (f"M-GDA ratios {[round(r, 3) for r in r_gda]} (run {run_gda}); "
              f"M-OGDA ratios {[round(r, 3) for r in r_ogda]} (run {run_ogda})")
    ok = report(4, run_gda >= 3 and run_ogda >= 3, detail, elapsed, 120)
    assert ok


def test_criterion_5_kappa_scaling():
    start = time.perf_counter()
    kappas = [4.0, 8.0, 16.0]
    counts = {"gda": [], "ogda": []}
    for kappa in kappas:
        problem = ScalarBilinearQuadratic(1.0, kappa)
        for method, alpha, horizon in (("gda", 1 / (4 * kappa**2), 12_000), ("ogda", 1 / (8 * kappa), 2_000)):
            _, trace = run_multistage(JointPoint([1.0], [1.0]), clean_oracle(problem),
                                      constant_schedule(alpha, horizon), method)
            hit = np.flatnonzero(trace.sq_dists() <= 1e-6)
            counts[method].append(int(hit[0]) if hit.size else None)
    slopes = {}
    for method, values in counts.items():
        slopes[method] = (float(np.polyfit(np.log(kappas), np.log(values), 1)[0])
                          if None not in values else float("nan"))
    elapsed = time.perf_counter() - start
    ok = report(5, abs(slopes["gda"] - 2.0) <= 0.3 and abs(slopes["ogda"] - 1.0) <= 0.3,
                f"GDA iterations {counts['gda']} slope {slopes['gda']:.3f} (target 2.0 +- 0.3); "
                f"OGDA iterations {counts['ogda']} slope {slopes['ogda']:.3f} (target 1.0 +- 0.3)",
                elapsed, 10)
    assert ok


def test_criterion_6_structural_inequalities():
    start = time.perf_counter()
    problems = [ScalarBilinearQuadratic(1.0, 2.0)]
    rng = np.random.default_rng(6)
    for seed in range(10):
        m, n = (int(v) for v in rng.integers(1, 6, size=2))
        problems.append(random_quadratic(seed, m, n, 0.5, 5.0, offset_scale=1.0))
    worst, failures = 0.0, 0
    for i, problem in enumerate(problems):
        for check in (check_lemma1, check_lemma2, check_corollary1):
            r = check(problem, 1000, i)
            worst = max(worst, r.max_violation)
            failures += not r.passed
    elapsed = time.perf_counter() - start
    ok = report(6, failures == 0,
                f"{len(problems)} problems x 3 checks, failures {failures}, worst scaled violation {worst:.2e}",
                elapsed, 5)
    assert ok


def test_criterion_7_oracle_statistics():
    start = time.perf_counter()
    N, sigma = 100_000, 1.5
    problem = random_quadratic(7, 3, 2, 1.0, 3.0, offset_scale=1.0)
    z = JointPoint([0.5, -1.0, 2.0], [1.0, -0.5])
    exact = problem.operator(z.stacked)
    noise = NoiseModel("block_isotropic_gaussian", sigma)
    oracle = NoisyOracle(problem, noise, 2024)
    samples = np.array([oracle.sample_phi(z) for _ in range(N)])
    dev = samples - exact
    std = noise.coordinate_std(3, 2)
    mean_ok = bool(np.all(np.abs(dev.mean(axis=0)) <= 4 * std / math.sqrt(N)))
    moments = [float(np.mean(np.sum(dev[:, :3] ** 2, axis=1))), float(np.mean(np.sum(dev[:, 3:] ** 2, axis=1)))]
    moment_ok = all(abs(m / sigma**2 - 1) <= 0.05 for m in moments)
    elapsed = time.perf_counter() - start
    ok = report(7, mean_ok and moment_ok,
                f"mean within 4 std/sqrt(N): {mean_ok}; block second moments "
                f"{moments[0]:.4f}, {moments[1]:.4f} vs sigma^2 = {sigma**2}", elapsed, 5)
    assert ok


def test_criterion_8_schedule_exactness():
    start = time.perf_counter()
    checks = []
    for build in (mgda_schedule, mogda_schedule):
        s = build(1.0, 2.0, 2, 10, 3)
        checks.append(s.lengths[1:] == [89, 178])
    for method in ("mgda", "mogda"):
        checks.append(preset_n1(method, "horizon_free", 1.0, 2.0, p=2) == 67)
        for n, C in ((1000, 2), (1001, 2), (999, 3), (12345, 7)):
            checks.append(preset_n1(method, "budget", 1.0, 2.0, n=n, C=C) == math.ceil(n / C))
    round_trips = 0
    schedules = [build(1.0, 2.0, 2, n1, 6) for build in (mgda_schedule, mogda_schedule) for n1 in (1, 20, 67)]
    schedules.append(StageSchedule(tuple((0.1, n) for n in (1, 1, 2, 3, 5, 8, 13))))
    for s in schedules:
        assert s.total <= 10_000
        for g in range(1, s.total + 1):
            k, i = locate(s, g)
            checks.append(global_index(s, k, i) == g)
            round_trips += 1
    elapsed = time.perf_counter() - start
    ok = report(8, all(checks), f"{len(checks) - round_trips} value checks, {round_trips} locate round-trips",
                elapsed, 60)
    assert ok


CONFIGS = {
    "gda_noisy": {
        "problem": {"kind": "bilinear_scalar", "mu": 1.0, "L": 2.0},
        "method": "gda", "sigma": 1.0,
        "schedule": {"kind": "constant", "alpha": 0.0625, "n_steps": 500},
    },
    "mogda_replicated": {
        "problem": {"kind": "bilinear_scalar", "mu": 1.0, "L": 2.0},
        "method": "mogda", "sigma": 0.5, "num_replications": 20,
        "schedule": {"kind": "eq23", "n1": 20, "num_stages": 4},
    },
    "mgda_random_quadratic": {
        "problem": {"kind": "random_quadratic", "seed": 3, "m": 3, "n": 2, "mu": 1.0, "L": 3.0,
                    "offset_scale": 1.0},
        "method": "mgda", "sigma": 1.0, "noise": "bounded_uniform", "num_replications": 5,
        "schedule": {"kind": "budget", "n": 2000},
    },
}


def test_criterion_9_reproducibility(tmp_path):
    start = time.perf_counter()
    identical = []
    for name, cfg in CONFIGS.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        for run in ("a", "b"):
            assert main(["run", "--config", str(path), "--seed", "31337",
                         "--out", str(tmp_path / name / run)]) == 0
        for f in ("trace.csv", "summary.json"):
            identical.append((tmp_path / name / "a" / f).read_bytes() == (tmp_path / name / "b" / f).read_bytes())
    elapsed = time.perf_counter() - start
    ok = report(9, all(identical), f"{sum(identical)}/{len(identical)} output files byte-identical",
                elapsed, 60)
    assert ok
