import math

import numpy as np
import pytest

from msgda import (
    DivergenceError,
    GdaState,
    GeneralQuadraticSaddle,
    InputError,
    JointPoint,
    NoiseModel,
    NoisyOracle,
    OgdaState,
    ScalarBilinearQuadratic,
    gda_step,
    mgda_schedule,
    mogda_schedule,
    ogda_step,
    random_quadratic,
    run_multistage,
    run_stage,
)
from msgda.analysis import gda_quadratic_exact_factor, replication_oracles
from msgda.schedules import constant_schedule, locate
from msgda.solvers import Trace, run_ensemble


def clean(problem, seed=0):
    return NoisyOracle(problem, NoiseModel(sigma=0.0), seed)


def test_gda_step_hand_values(bilinear, ones2):
    s = gda_step(GdaState(ones2), clean(bilinear), 0.1)
    np.testing.assert_allclose(s.z.to_list(), [0.7, 1.1], rtol=0, atol=1e-15)
    assert s.global_iter == 1


def test_gda_zero_step_is_identity(bilinear):
    z = JointPoint([0.0], [1.0])
    assert gda_step(GdaState(z), clean(bilinear), 0.0).z == z


def test_gda_step_at_saddle_stays(bilinear):
    zero = JointPoint([0.0], [0.0])
    assert gda_step(GdaState(zero), clean(bilinear), 0.3).z == zero


def test_ogda_step_hand_values(bilinear, ones2):
    s = ogda_step(OgdaState.start(ones2), clean(bilinear), 0.1)
    np.testing.assert_allclose(s.z.to_list(), [0.7, 1.1], rtol=0, atol=1e-15)
    np.testing.assert_allclose(s.w.to_list(), [0.71, 1.03], rtol=0, atol=1e-15)
    assert s.point == s.w


def test_negative_stepsize_rejected(bilinear, ones2):
    with pytest.raises(InputError):
        gda_step(GdaState(ones2), clean(bilinear), -0.1)
    with pytest.raises(InputError):
        ogda_step(OgdaState.start(ones2), clean(bilinear), -0.1)


def test_ogda_uses_two_calls_in_order(bilinear, ones2):
    noise = NoiseModel("per_coordinate_gaussian", 1.0)
    oracle = NoisyOracle(bilinear, noise, 3)
    xi = NoisyOracle(bilinear, noise, 3).next_noise(2)
    s = ogda_step(OgdaState.start(ones2), oracle, 0.1)
    assert oracle.calls == 2
    z1 = ones2.stacked - 0.1 * (np.array([3.0, -1.0]) + xi[0])
    w1 = ones2.stacked - 0.1 * (bilinear.operator(z1) + xi[1])
    np.testing.assert_array_equal(s.z.stacked, z1)
    np.testing.assert_array_equal(s.w.stacked, w1)


@pytest.mark.parametrize("L", [1.0, 2.0, 4.0])
def test_deterministic_gda_matches_exact_factor(L):
    problem = ScalarBilinearQuadratic(1.0, L)
    alpha = 1.0 / 16 / L**2
    _, trace = run_multistage(JointPoint([1.0], [1.0]), clean(problem), constant_schedule(alpha, 200), "gda")
    factor = gda_quadratic_exact_factor(1.0, L, alpha)
    expected = 2.0 * factor ** np.arange(201)
    np.testing.assert_allclose(trace.sq_dists(), expected, rtol=1e-12)
    # the contraction bound for alpha <= mu/(4L^2)
    assert np.all(trace.sq_dists()[1:] <= (1 - alpha) * trace.sq_dists()[:-1])


def test_noiseless_gda_contracts_on_random_instances():
    for seed in range(5):
        p = random_quadratic(seed, 3, 2, 1.0, 3.0, offset_scale=1.0)
        c = p.constants
        alpha = c.mu / (4 * c.L**2)
        _, trace = run_multistage(JointPoint.zeros(3, 2), clean(p), constant_schedule(alpha, 100), "gda")
        d = trace.sq_dists()
        assert np.all(d[1:] <= (1 - alpha * c.mu) * d[:-1] * (1 + 1e-12))


def test_ogda_first_stage_bound():
    problem = ScalarBilinearQuadratic(1.0, 2.0)
    n1 = 100
    schedule = mogda_schedule(1.0, 2.0, 2, n1, 1)
    _, trace = run_multistage(JointPoint([1.0], [1.0]), clean(problem), schedule, "mogda")
    assert trace[-1].sq_dist <= math.exp(-n1 / (8 * 2.0)) * 2.0


def test_trace_structure():
    problem = ScalarBilinearQuadratic(1.0, 2.0)
    schedule = mgda_schedule(1.0, 2.0, 2, 10, 3)
    state, trace = run_multistage(JointPoint([1.0], [1.0]), clean(problem), schedule, "mgda")
    assert len(trace) == schedule.total + 1
    first = trace[0]
    assert (first.global_iter, first.stage, first.inner_iter, first.alpha) == (0, 1, 0, 1 / 16)
    assert first.sq_dist == 2.0
    assert first.phi_norm == pytest.approx(math.sqrt(10))
    for row in trace[1:]:
        assert (row.stage, row.inner_iter) == locate(schedule, row.global_iter)
        assert row.alpha == schedule.stages[row.stage - 1][0]
    assert state.global_iter == schedule.total
    assert trace[-1].sq_dist == pytest.approx(float(np.sum(state.z.stacked**2)), rel=0)


def test_trace_rejects_gaps():
    from msgda.solvers import TraceRow

    trace = Trace()
    trace.append(TraceRow(0, 1, 0, 0.1, 1.0, 1.0))
    with pytest.raises(InputError):
        trace.append(TraceRow(2, 1, 2, 0.1, 1.0, 1.0))


def test_divergence_reports_iteration(bilinear, ones2):
    with pytest.raises(DivergenceError) as info:
        run_stage(GdaState(ones2), clean(bilinear), 1.0, 1000, "gda")
    # factor is 4 per step, so 4^t > 1e12 first at t = 20
    assert info.value.global_iter == 20
    assert info.value.exit_code == 3


def test_same_seed_same_trace(bilinear, ones2):
    schedule = mogda_schedule(1.0, 2.0, 2, 10, 3)
    runs = [
        run_multistage(ones2, NoisyOracle(bilinear, NoiseModel(sigma=1.0), 42), schedule, "mogda")[1]
        for _ in range(2)
    ]
    assert runs[0].rows == runs[1].rows


@pytest.mark.parametrize("method", ["mgda", "mogda"])
@pytest.mark.parametrize(
    "problem, z0",
    [
        (ScalarBilinearQuadratic(1.0, 2.0), JointPoint([1.0], [1.0])),
        (random_quadratic(3, 3, 3, 2.0, 4.0, offset_scale=1.0), JointPoint.zeros(3, 3)),
    ],
)
def test_ensemble_is_bit_identical_to_single_runs(method, problem, z0):
    c = problem.constants
    build = mgda_schedule if method == "mgda" else mogda_schedule
    schedule = build(c.mu, c.L, 2, 30, 3)
    noise = NoiseModel("block_isotropic_gaussian", 0.7)
    oracles = replication_oracles(problem, noise, 4, 9)
    result = run_ensemble(problem, z0, schedule, method, oracles, checkpoints=range(schedule.total + 1))
    for r in range(4):
        fresh = replication_oracles(problem, noise, 4, 9)[r]
        _, trace = run_multistage(z0, fresh, schedule, method)
        assert result.values[:, r].tobytes() == trace.sq_dists().tobytes()


def test_one_step_recursion_in_expectation():
    """E|z_{t+1}-z*|^2 <= (1 - alpha mu) E|z_t-z*|^2 + 2 alpha^2 sigma^2 (block-isotropic noise)."""
    problem = ScalarBilinearQuadratic(1.0, 2.0)
    alpha, sigma, R, T = 1 / 16, 1.0, 4000, 60
    oracles = replication_oracles(problem, NoiseModel(sigma=sigma), R, 2024)
    res = run_ensemble(problem, JointPoint([3.0], [-2.0]), constant_schedule(alpha, T), "gda",
                       oracles, checkpoints=range(T + 1))
    mean = res.values.mean(axis=1)
    se = res.values.std(axis=1, ddof=1) / math.sqrt(R)
    bound = (1 - alpha) * mean[:-1] + 2 * alpha**2 * sigma**2
    assert np.all(mean[1:] <= bound + 3 * se[1:])


def test_uncoupled_quadratic_shows_kappa_separation():
    """On a problem whose hardest direction is pure curvature, GDA needs ~kappa^2
    iterations and OGDA ~kappa iterations at their safe stepsizes."""
    kappas = [4.0, 8.0, 16.0]
    counts = {"gda": [], "ogda": []}
    for kappa in kappas:
        problem = GeneralQuadraticSaddle([[1.0]], [[0.0]], [[kappa]])
        for method, alpha in (("gda", 1 / (4 * kappa**2)), ("ogda", 1 / (8 * kappa))):
            _, trace = run_multistage(JointPoint([1.0], [1.0]), clean(problem),
                                      constant_schedule(alpha, 20_000), method)
            counts[method].append(int(np.argmax(trace.sq_dists() <= 1e-6)))
    slope = {m: np.polyfit(np.log(kappas), np.log(v), 1)[0] for m, v in counts.items()}
    assert abs(slope["gda"] - 2.0) < 0.1
    assert abs(slope["ogda"] - 1.0) < 0.1
