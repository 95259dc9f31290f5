"""Damped Picard iteration for the mean field equilibrium and its certificates.

One application of the map Phi takes flows (p, nu), solves the value
equation, runs the forward equation under the optimal feedback and pushes
the state law through the feedback to get (Phi_p, Phi_nu).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hjb import (PolicySurface, ValueSurface, controlled_rate_table, default_flows,
                  default_grid, evaluate_policy_cost, solve_value)
from .markov import SimplexFlow, TimeGrid, forward_flow
from .measures import ControlFlow, DiscreteMeasure, mixture, pushforward_policy, w1
from .model import ProblemSpec


@dataclass
class EquilibriumSolution:
    p_flow: SimplexFlow
    nu_flow: ControlFlow
    V: ValueSurface
    policy: PolicySurface
    trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def grid(self) -> TimeGrid:
        return self.p_flow.grid

    @property
    def residual(self) -> float:
        return self.trace[-1]["residual"] if self.trace else np.inf


@dataclass(frozen=True)
class PhiResult:
    p_new: SimplexFlow
    nu_new: ControlFlow
    V: ValueSurface
    policy: PolicySurface
    state_res: float
    control_res: float
    residual: float


def apply_phi(spec: ProblemSpec, p_flow: SimplexFlow, nu_flow: ControlFlow) -> PhiResult:
    """One application of the best-response-and-propagate map, with residuals."""
    grid = p_flow.grid
    V, policy = solve_value(spec, p_flow, nu_flow)
    table = controlled_rate_table(spec, policy, p_flow, nu_flow)
    p_new = forward_flow(table, spec.p_init, grid)
    nus = tuple(pushforward_policy(policy.a[k], p_new.points[k]) for k in range(grid.n_steps + 1))
    nu_new = ControlFlow(grid, nus)
    dp = np.abs(p_flow.points - p_new.points).sum(axis=1)
    dnu = np.array([w1(a, b) for a, b in zip(nu_flow.measures, nus)])
    return PhiResult(p_new, nu_new, V, policy, float(dp.max()), float(dnu.max()),
                     float((dp + dnu).max()))


def damp(p_flow: SimplexFlow, nu_flow: ControlFlow, p_new: SimplexFlow, nu_new: ControlFlow,
         theta: float):
    """(1 - theta) x + theta x_new; for nu the weights mix on the union of atoms."""
    pts = (1.0 - theta) * p_flow.points + theta * p_new.points
    pts = np.clip(pts, 0.0, None)
    pts /= pts.sum(axis=1, keepdims=True)
    if theta == 1.0:
        nus = nu_new.measures
    else:
        nus = tuple(mixture(a, b, theta) for a, b in zip(nu_flow.measures, nu_new.measures))
    return SimplexFlow(p_flow.grid, pts), ControlFlow(nu_flow.grid, nus)


def picard_solve(spec: ProblemSpec, init=None, theta: float = 0.5, tol: float = 1e-6,
                 max_iter: int = 200, grid: TimeGrid | None = None,
                 callback=None) -> EquilibriumSolution:
    """Damped fixed-point iteration on (p, nu).

    ``init`` is a (p_flow, nu_flow) pair; the default is p constant at
    ``p_init`` and nu a point mass at the minimizer of f0. The iteration stops
    as soon as sup_t (|p - Phi_p|_1 + W1(nu, Phi_nu)) < tol; the returned flows
    are the ones whose residual passed. Non-convergence is reported through
    ``converged=False``, not raised.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"damping must lie in (0, 1], got {theta}")
    if init is None:
        grid = grid or default_grid(spec.T)
        p_flow, nu_flow = default_flows(spec, grid)
    else:
        p_flow, nu_flow = init
    trace = []
    phi = None
    for it in range(1, max_iter + 1):
        phi = apply_phi(spec, p_flow, nu_flow)
        rec = {"iter": it, "state_res": phi.state_res, "control_res": phi.control_res,
               "residual": phi.residual}
        trace.append(rec)
        if callback is not None:
            callback(rec)
        if phi.residual < tol:
            return EquilibriumSolution(p_flow, nu_flow, phi.V, phi.policy, trace, True)
        p_flow, nu_flow = damp(p_flow, nu_flow, phi.p_new, phi.nu_new, theta)
    V, policy = solve_value(spec, p_flow, nu_flow)
    return EquilibriumSolution(p_flow, nu_flow, V, policy, trace, False)


def consistency_residual(spec: ProblemSpec, sol: EquilibriumSolution):
    """(sup_t |p - Phi_p|_1, sup_t W1(nu, Phi_nu)) from one fresh application of Phi."""
    phi = apply_phi(spec, sol.p_flow, sol.nu_flow)
    return phi.state_res, phi.control_res


def _random_policy(spec, grid, rng, n_knots=5) -> PolicySurface:
    """Random feedback: box-uniform values at a few knots, linear in between."""
    lo, hi = spec.box[:, 0], spec.box[:, 1]
    knots = np.linspace(0.0, spec.T, n_knots)
    vals = lo + (hi - lo) * rng.random((n_knots, spec.m, spec.l))
    a = np.empty((grid.n_steps + 1, spec.m, spec.l))
    for i in range(spec.m):
        for d in range(spec.l):
            a[:, i, d] = np.interp(grid.nodes, knots, vals[:, i, d])
    return PolicySurface(grid, a)


def candidate_policies(spec: ProblemSpec, sol: EquilibriumSolution, n_random: int, rng,
                       deltas=(1e-3, 1e-2, 1e-1, 0.5)):
    """Random policies plus systematic perturbations of the equilibrium feedback."""
    rng = np.random.default_rng(rng)
    grid = sol.grid
    lo, hi = spec.box[:, 0], spec.box[:, 1]
    out = [("a_hat", sol.policy)]
    for d in deltas:
        for sign in (1.0, -1.0):
            out.append((f"shift{sign * d:+g}", PolicySurface(grid, np.clip(sol.policy.a + sign * d, lo, hi))))
        for i in range(spec.m):
            a = sol.policy.a.copy()
            a[:, i] = np.clip(a[:, i] + d, lo, hi)
            out.append((f"state{i}+{d:g}", PolicySurface(grid, a)))
    for name, c in (("corner_lo", lo), ("corner_hi", hi)):
        out.append((name, PolicySurface.constant(grid, np.tile(c, (spec.m, 1)))))
    for r in range(n_random):
        out.append((f"random{r}", _random_policy(spec, grid, rng)))
    return out


@dataclass(frozen=True)
class GapReport:
    gap: float
    worst: str
    worst_margin: np.ndarray
    n_candidates: int
    margins: dict

    def as_dict(self) -> dict:
        return {"gap": self.gap, "worst": self.worst, "worst_margin": self.worst_margin.tolist(),
                "n_candidates": self.n_candidates,
                "margins": {k: v.tolist() for k, v in self.margins.items()}}


def best_response_gap(spec: ProblemSpec, sol: EquilibriumSolution, n_candidates: int, rng,
                      systematic: bool = True) -> GapReport:
    """max over candidates of (V - J(candidate)) clipped at 0, componentwise in the start state.

    Each candidate is evaluated against the solution's frozen flows. The
    margin J - V is kept for every candidate so callers can inspect it.
    """
    V0 = sol.V.V[0]
    cands = candidate_policies(spec, sol, n_candidates, rng)
    if not systematic:
        cands = [c for c in cands if c[0].startswith("random")]
    margins = {}
    gap, worst, worst_margin = 0.0, "", np.full(spec.m, np.inf)
    for name, pol in cands:
        J = evaluate_policy_cost(spec, pol, sol.p_flow, sol.nu_flow)
        margin = J - V0
        margins[name] = margin
        g = float(max(0.0, (V0 - J).max()))
        if g > gap or margin.min() < worst_margin.min():
            if g >= gap:
                gap = g
            if margin.min() < worst_margin.min() and name != "a_hat":
                worst, worst_margin = name, margin
    return GapReport(gap, worst, worst_margin, len(cands), margins)


def alternative_init(spec: ProblemSpec, grid: TimeGrid):
    """A deliberately different start: p at the vertex least charged by p_init, nu at the top corner."""
    e = np.zeros(spec.m)
    e[int(np.argmin(spec.p_init))] = 1.0
    p = SimplexFlow.constant(grid, e)
    nu = ControlFlow.constant(grid, DiscreteMeasure.dirac(spec.box[:, 1]))
    return p, nu


def two_start_agreement(spec: ProblemSpec, theta: float = 0.5, tol: float = 1e-6,
                        max_iter: int = 200, grid: TimeGrid | None = None, first=None):
    """Solve from the default and an alternative start; return (sup |p1 - p2|, sol1, sol2)."""
    grid = grid or (first.grid if first is not None else default_grid(spec.T))
    s1 = first or picard_solve(spec, theta=theta, tol=tol, max_iter=max_iter, grid=grid)
    s2 = picard_solve(spec, init=alternative_init(spec, grid), theta=theta, tol=tol,
                      max_iter=max_iter)
    return float(np.abs(s1.p_flow.points - s2.p_flow.points).max()), s1, s2
