import numpy as np
import pytest

from mfgfinite import girsanov as G
from mfgfinite import hjb
from mfgfinite.markov import PathRecord, RateTable, TimeGrid, build_reference_generator, simulate_batch

from conftest import make_spec

Q0 = build_reference_generator(2)
Q2 = np.array([[-2.0, 2.0], [2.0, -2.0]])


def test_loglik_examples():
    assert G.log_likelihood(PathRecord(0, (), (), 1.0), Q2, Q0).log_total == -1.0
    one = G.log_likelihood(PathRecord(0, (0.3,), (1,), 1.0), Q2, Q0)
    assert one.log_total == pytest.approx(-1 + np.log(2), abs=1e-15)
    assert one.log_total == one.log_drift + one.log_jumps
    ref = G.log_likelihood(PathRecord(1, (0.2, 0.6), (0, 1), 1.0), Q0, Q0)
    assert ref.log_total == 0.0


def test_loglik_callable_matches_constant():
    path = PathRecord(0, (0.3, 0.8), (1, 0), 1.0)
    a = G.log_likelihood(path, Q2, Q0).log_total
    b = G.log_likelihood(path, lambda t, i: Q2[i], Q0).log_total
    assert abs(a - b) <= 1e-12


def test_loglik_time_dependent_quadrature():
    rate = lambda t, i: np.array([-(1 + t), 1 + t]) if i == 0 else np.array([1 + t, -(1 + t)])
    path = PathRecord(0, (0.5,), (1,), 1.0)
    # drift: -int_0^1 t dt = -0.5 ; jump factor 1.5
    assert G.log_likelihood(path, rate, Q0).log_total == pytest.approx(-0.5 + np.log(1.5), abs=1e-12)


def test_loglik_masked_jump_flagged():
    mask = np.array([[False, False, True], [True, False, True], [True, True, False]])
    q0 = build_reference_generator(3, mask)
    path = PathRecord(0, (0.5,), (1,), 1.0)
    r = G.log_likelihood(path, q0.entries, q0)
    assert r.singular and r.log_total == -np.inf


def test_loglik_additive_over_windows():
    path = PathRecord(0, (0.2, 0.45, 0.9), (1, 0, 1), 1.0)
    rate = lambda t, i: (1 + 0.5 * np.sin(3 * t)) * Q2[i]
    full = G.log_likelihood(path, rate, Q0).log_total
    parts = G.log_likelihood(path, rate, Q0, 0.0, 0.5).log_total + G.log_likelihood(path, rate, Q0, 0.5, 1.0).log_total
    assert abs(full - parts) <= 1e-12


def test_batch_matches_single(backend):
    grid = TimeGrid(1.0, 50)
    R = np.stack([np.array([[0, 1 + t], [2 - t, 0]]) for t in grid.nodes])
    table = RateTable(grid, R)
    b = simulate_batch(RateTable.constant(grid, Q0), [0.5, 0.5], 200, 3)
    lw = G.batch_log_likelihood(b, table, Q0)
    for p in range(0, 200, 23):
        single = G.log_likelihood(b.record(p), table, Q0).log_total
        assert abs(single - lw[p]) <= 1e-12


def test_measure_consistency_two_state():
    r = G.measure_consistency(Q2, Q0, [1, 0], 1.0, 100000, 8)
    assert r.passed
    assert r.exact[0] == pytest.approx(0.5 + 0.5 * np.exp(-4), abs=1e-12)


def test_measure_consistency_trivial_cases():
    r = G.measure_consistency(Q0.entries, Q0, [0.3, 0.7], 1.0, 1000, 1)
    assert r.mean_weight == 1.0 and r.mean_weight_se == 0.0
    r0 = G.measure_consistency(Q2, Q0, [0.3, 0.7], 0.0, 1000, 1)
    assert np.array_equal(r0.reweighted, [0.3, 0.7]) and np.array_equal(r0.exact, [0.3, 0.7])


def test_importance_unit_cost():
    spec = make_spec(g={"type": "none"}, f0={"type": "quadratic", "gamma": 1e-300, "linear": 0.0},
                     f1={"type": "congestion", "base": 1.0, "kappa": 0.0})
    grid = hjb.default_grid(1.0, 200)
    p, nu = hjb.default_flows(spec, grid)
    pol = hjb.PolicySurface.constant(grid, [[1.7], [0.4]])
    est = G.importance_cost(spec, pol, p, nu, 50000, 4)
    assert abs(est.estimate - 1.0) <= 3 * est.se
    assert abs(est.mean_weight - 1.0) <= 3 * est.se_weight


def test_importance_matches_ode(quad_spec, quad_solution):
    p, nu, V, pol = quad_solution
    est = G.importance_cost(quad_spec, pol, p, nu, 100000, 6)
    J = hjb.total_cost(quad_spec, hjb.evaluate_policy_cost(quad_spec, pol, p, nu))
    assert abs(est.estimate - J) <= 3 * est.se
    assert np.isfinite(est.estimate)


def test_importance_min_paths(quad_spec, quad_solution):
    p, nu, V, pol = quad_solution
    with pytest.raises(ValueError):
        G.importance_cost(quad_spec, pol, p, nu, 10, 0)


def test_second_moment_bound_exact_for_two_state():
    grid = TimeGrid(1.0, 10)
    table = RateTable.constant(grid, Q2)
    assert G.second_moment_bound(table, Q0) == pytest.approx(np.e)
