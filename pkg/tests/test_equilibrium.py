import numpy as np
import pytest

from mfgfinite import hjb
from mfgfinite.equilibrium import (apply_phi, best_response_gap, consistency_residual, damp,
                                   picard_solve, two_start_agreement)
from mfgfinite.markov import SimplexFlow

from conftest import make_spec


def test_decoupled_converges_immediately():
    # no mean-field dependence: Phi is constant, so theta = 1 lands on it at once
    spec = make_spec()
    sol = picard_solve(spec, theta=1.0, grid=hjb.default_grid(1.0, 200))
    assert sol.converged and len(sol.trace) <= 2


def test_damping_identity_and_bounds(mono_spec):
    grid = hjb.default_grid(1.0, 50)
    p, nu = hjb.default_flows(mono_spec, grid)
    phi = apply_phi(mono_spec, p, nu)
    p1, nu1 = damp(p, nu, phi.p_new, phi.nu_new, 1.0)
    assert np.array_equal(p1.points, phi.p_new.points) and nu1.measures == phi.nu_new.measures
    with pytest.raises(ValueError):
        picard_solve(mono_spec, theta=0.0)


def test_monotone_solution(mono_spec, mono_sol):
    assert mono_sol.converged and mono_sol.residual < 1e-6
    s, c = consistency_residual(mono_spec, mono_sol)
    assert s + c < 1e-6
    assert mono_sol.p_flow.points[-1, 0] == pytest.approx(0.6060, abs=1e-3)


def test_corrupted_flow_detected(mono_spec, mono_sol):
    pts = mono_sol.p_flow.points.copy()
    k = pts.shape[0] // 2
    pts[k] += [0.1, -0.1]
    bad = type(mono_sol)(SimplexFlow(mono_sol.grid, pts), mono_sol.nu_flow, mono_sol.V,
                         mono_sol.policy, [], False)
    state_res, _ = consistency_residual(mono_spec, bad)
    assert state_res >= 0.05


def test_picard_is_deterministic(mono_spec):
    grid = hjb.default_grid(1.0, 100)
    a = picard_solve(mono_spec, grid=grid, tol=1e-8)
    b = picard_solve(mono_spec, grid=grid, tol=1e-8)
    assert np.array_equal(a.p_flow.points, b.p_flow.points)
    assert [r["residual"] for r in a.trace] == [r["residual"] for r in b.trace]


def test_non_convergence_reported(mono_spec):
    sol = picard_solve(mono_spec, max_iter=1, grid=hjb.default_grid(1.0, 50))
    assert not sol.converged and len(sol.trace) == 1


def test_best_response_gap(mono_spec, mono_sol):
    rep = best_response_gap(mono_spec, mono_sol, 10, 3)
    assert rep.gap <= 1e-6
    assert np.all(rep.margins["a_hat"] == 0.0)
    assert rep.worst_margin.min() > 0
    assert np.all(rep.margins["corner_hi"] > 1e-3)


def test_two_starts_agree():
    spec = make_spec(f1={"type": "congestion", "base": 0.0, "kappa": 1.0},
                     g={"type": "congestion", "base": 0.0, "kappa": 1.0})
    diff, s1, s2 = two_start_agreement(spec, grid=hjb.default_grid(1.0, 200))
    assert s1.converged and s2.converged and diff <= 1e-5
