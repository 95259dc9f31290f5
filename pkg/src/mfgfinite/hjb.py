"""Backward value equations on the grid and their Monte Carlo certificate.

For flows (p, nu) the value V(t) solves

    dV_i/dt + min_alpha [ f(t, i, alpha, p_t, nu_t) + sum_j q_ij(alpha) (V_j - V_i) ] = 0,
    V_i(T) = g(i, p_T),

which is the minimized Hamiltonian plus the reference-rate differences.
Fixed Markov policies give the same equation without the minimum.

Conventions shared with the simulators: policies and ``p`` are linear in time
between grid nodes, ``nu`` is held at its left-node value on each interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .markov import (PathBatch, RateTable, SimplexFlow, TimeGrid, integrate_along,
                     simulate_batch)
from .measures import ControlFlow, DiscreteMeasure
from .model import ProblemSpec


class SolverError(RuntimeError):
    """Raised when an inner minimization fails, with time/state context."""


@dataclass(frozen=True)
class ValueSurface:
    grid: TimeGrid
    V: np.ndarray

    def at(self, t: float) -> np.ndarray:
        k = self.grid.interval(t)
        w = t / self.grid.dt - k if self.grid.dt else 0.0
        return (1.0 - w) * self.V[k] + w * self.V[k + 1]

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.V).max())


@dataclass(frozen=True)
class PolicySurface:
    """Feedback control a[k, i] at node t_k in state i (shape (K + 1, m, l))."""

    grid: TimeGrid
    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim == 2:
            a = a[..., None]
        object.__setattr__(self, "a", a)

    @property
    def m(self) -> int:
        return self.a.shape[1]

    def at(self, t: float, i: int) -> np.ndarray:
        k = self.grid.interval(t)
        w = t / self.grid.dt - k if self.grid.dt else 0.0
        return (1.0 - w) * self.a[k, i] + w * self.a[k + 1, i]

    def at_all(self, t: float) -> np.ndarray:
        k = self.grid.interval(t)
        w = t / self.grid.dt - k if self.grid.dt else 0.0
        return (1.0 - w) * self.a[k] + w * self.a[k + 1]

    def node(self, k: int) -> np.ndarray:
        return self.a[k]

    @classmethod
    def constant(cls, grid: TimeGrid, alpha_per_state) -> "PolicySurface":
        a = np.asarray(alpha_per_state, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        return cls(grid, np.broadcast_to(a, (grid.n_steps + 1,) + a.shape).copy())


def default_grid(T: float, n_steps: int | None = None) -> TimeGrid:
    if n_steps is None:
        n_steps = 1000 if T <= 2 else int(math.ceil(500 * T))
    return TimeGrid(T, n_steps)


def default_flows(spec: ProblemSpec, grid: TimeGrid):
    """p constant at p_init, nu a Dirac at the minimizer of f0."""
    p = SimplexFlow.constant(grid, spec.p_init)
    nu = ControlFlow.constant(grid, DiscreteMeasure.dirac(spec.argmin_f0()))
    return p, nu


# --------------------------------------------------------------------------
# drivers


def _driver(spec, t, V, p, nu, alpha):
    """f_i + sum_j q_ij (V_j - V_i) for every state i."""
    Q = spec.rate_matrix(t, alpha, p, nu)
    return spec.cost_vector(t, alpha, p, nu) + Q @ V


def _optimal_driver(spec, t, V, p, nu):
    try:
        alpha = spec.argmin_all(t, V, p)
    except Exception as exc:  # pragma: no cover - context for custom specs
        raise SolverError(f"Hamiltonian minimization failed at t={t:.6g}: {exc}") from exc
    return _driver(spec, t, V, p, nu, alpha)


def _terminal(spec, p_T):
    return np.array([float(spec.g(i, p_T)) for i in range(spec.m)])


def _backward(grid, VT, driver):
    """Classical RK4 from T down to 0 for dV/dt = -driver(k, t, V)."""
    K, dt = grid.n_steps, grid.dt
    V = np.empty((K + 1, VT.size))
    V[K] = VT
    for k in range(K - 1, -1, -1):
        t1, th, t0 = (k + 1) * dt, (k + 0.5) * dt, k * dt
        v = V[k + 1]
        d1 = driver(k, t1, v)
        d2 = driver(k, th, v + 0.5 * dt * d1)
        d3 = driver(k, th, v + 0.5 * dt * d2)
        d4 = driver(k, t0, v + dt * d3)
        V[k] = v + dt / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4)
    return V


def solve_value(spec: ProblemSpec, p_flow: SimplexFlow, nu_flow: ControlFlow,
                g_shift=None):
    """Value and optimal feedback for frozen flows (backward RK4).

    ``g_shift`` optionally adds a per-state vector to the terminal cost.
    """
    grid = p_flow.grid
    VT = _terminal(spec, p_flow.points[-1])
    if g_shift is not None:
        VT = VT + np.asarray(g_shift, dtype=float)

    def driver(k, t, v):
        return _optimal_driver(spec, t, v, p_flow.at(t), nu_flow.on_interval(k))

    V = _backward(grid, VT, driver)
    a = np.empty((grid.n_steps + 1, spec.m, spec.l))
    for k in range(grid.n_steps + 1):
        a[k] = spec.argmin_all(k * grid.dt, V[k], p_flow.points[k])
    return ValueSurface(grid, V), PolicySurface(grid, a)


def policy_value(spec: ProblemSpec, policy: PolicySurface, p_flow: SimplexFlow,
                 nu_flow: ControlFlow) -> ValueSurface:
    """Cost-to-go of a fixed Markov policy (linear backward ODE)."""
    grid = p_flow.grid
    K, dt = grid.n_steps, grid.dt
    # rates and costs do not depend on V: tabulate them at the RK4 stage times
    # (left, mid, right of each interval; nu is the left-node measure throughout)
    uses_nu = spec.f2 is not None or spec.mean_field_in_q
    Q = np.empty((K, 3, spec.m, spec.m))
    f = np.empty((K, 3, spec.m))
    for k in range(K):
        nu = nu_flow.on_interval(k)
        for s, t in enumerate((k * dt, (k + 0.5) * dt, (k + 1) * dt)):
            if s == 0 and k > 0 and not uses_nu:
                Q[k, 0], f[k, 0] = Q[k - 1, 2], f[k - 1, 2]
                continue
            if s == 1:
                alpha, p = policy.at_all(t), p_flow.at(t)
            else:
                alpha, p = policy.a[k + s // 2], p_flow.points[k + s // 2]
            Q[k, s] = spec.rate_matrix(t, alpha, p, nu)
            f[k, s] = spec.cost_vector(t, alpha, p, nu)
    V = np.empty((K + 1, spec.m))
    V[K] = _terminal(spec, p_flow.points[-1])
    for k in range(K - 1, -1, -1):
        v = V[k + 1]
        Qk, fk = Q[k], f[k]
        d1 = fk[2] + Qk[2] @ v
        d2 = fk[1] + Qk[1] @ (v + 0.5 * dt * d1)
        d3 = fk[1] + Qk[1] @ (v + 0.5 * dt * d2)
        d4 = fk[0] + Qk[0] @ (v + dt * d3)
        V[k] = v + dt / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4)
    return ValueSurface(grid, V)


def evaluate_policy_cost(spec: ProblemSpec, policy: PolicySurface, p_flow: SimplexFlow,
                         nu_flow: ControlFlow) -> np.ndarray:
    """J(0, i): expected total cost started in state i under ``policy``."""
    return policy_value(spec, policy, p_flow, nu_flow).V[0].copy()


def total_cost(spec: ProblemSpec, J0) -> float:
    return float(spec.p_init @ np.asarray(J0))


# --------------------------------------------------------------------------
# tables for the path simulators


def controlled_rate_fn(spec, policy, p_flow, nu_flow):
    """(t, i) -> rate row under the policy, flows frozen."""
    def rate_fn(t, i):
        return spec.rate_row(t, i, policy.at(t, i), p_flow.at(t), nu_flow.at(t))
    return rate_fn


def controlled_rate_table(spec, policy, p_flow, nu_flow) -> RateTable:
    grid = policy.grid
    K = grid.n_steps
    R = np.empty((K + 1, spec.m, spec.m))
    for k in range(K + 1):
        t = k * grid.dt
        p = p_flow.points[k]
        nu = nu_flow.measures[min(k, K - 1)]
        R[k] = spec.rate_matrix(t, policy.a[k], p, nu)
    return RateTable(grid, R)


def running_cost_coefficients(spec, policy, p_flow, nu_flow) -> np.ndarray:
    """f along the policy at (left, mid, right) of every interval, shape (K, m, 3)."""
    grid = policy.grid
    K, dt = grid.n_steps, grid.dt
    coef = np.empty((K, spec.m, 3))
    for k in range(K):
        nu = nu_flow.on_interval(k)
        tm = (k + 0.5) * dt
        coef[k, :, 0] = spec.cost_vector(k * dt, policy.a[k], p_flow.points[k], nu)
        coef[k, :, 1] = spec.cost_vector(tm, policy.at_all(tm), p_flow.at(tm), nu)
        coef[k, :, 2] = spec.cost_vector((k + 1) * dt, policy.a[k + 1], p_flow.points[k + 1], nu)
    return coef


def path_costs(spec, batch: PathBatch, coef: np.ndarray, p_T, grid: TimeGrid) -> np.ndarray:
    """Realized cost: integral of f along each path plus g(X_T, p_T)."""
    gT = _terminal(spec, p_T)
    return integrate_along(batch, coef, grid) + gT[batch.final_states()]


def martingale_residual(spec, V: ValueSurface, policy, p_flow, nu_flow, n_paths: int, rng,
                        threads: int = 1) -> dict:
    """Mean of g(X_T) + int f dt - V(0, X_0) under the controlled chain.

    A mean within three standard errors of zero supports the representation
    Y_t = V(t, X_t) of the backward equation.
    """
    table = controlled_rate_table(spec, policy, p_flow, nu_flow)
    batch = simulate_batch(table, spec.p_init, n_paths, rng, lam=spec.majorant, threads=threads)
    coef = running_cost_coefficients(spec, policy, p_flow, nu_flow)
    r = path_costs(spec, batch, coef, p_flow.points[-1], policy.grid) - V.V[0][batch.init]
    mean = float(r.mean())
    se = float(r.std(ddof=1) / np.sqrt(r.size)) if r.size > 1 else 0.0
    return {"mean": mean, "se": se, "n_paths": int(r.size),
            "max_abs": float(np.abs(r).max()), "within_3se": bool(abs(mean) <= 3 * se)}


def stability_probe(spec, eps: float, p_flow=None, nu_flow=None, direction=None, grid=None) -> float:
    """sup-norm change of V when g is perturbed by eps * direction (default: all ones)."""
    if p_flow is None:
        p_flow, nu_flow = default_flows(spec, grid or default_grid(spec.T))
    h = np.ones(spec.m) if direction is None else np.asarray(direction, dtype=float)
    base, _ = solve_value(spec, p_flow, nu_flow)
    bumped, _ = solve_value(spec, p_flow, nu_flow, g_shift=eps * h)
    return float(np.abs(bumped.V - base.V).max())
