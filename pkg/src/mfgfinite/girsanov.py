"""Likelihood ratios of controlled chains against the reference chain.

Under the reference law every admissible transition fires at rate 1. A
controlled law with rates q has density

    log W_T = int_0^T (q_{X X}(s) - q0_{X X}) ds + sum_{jumps i->j} log(q_ij(tau) / q0_ij)

along each path. Everything here stays in log space until aggregation.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import quad

from . import kernels
from .hjb import controlled_rate_table, path_costs, running_cost_coefficients
from .markov import (PathBatch, PathRecord, RateMatrix, RateTable, TimeGrid, as_seed_sequence,
                     forward_flow, integrate_along, matexp_marginal, simulate_batch)


@dataclass(frozen=True)
class LikelihoodBreakdown:
    log_drift: float
    log_jumps: float
    log_total: float

    @property
    def singular(self) -> bool:
        """True when the path used a transition the controlled law cannot make."""
        return self.log_total == -np.inf


def _entries(Q0) -> np.ndarray:
    return np.asarray(Q0.entries if isinstance(Q0, RateMatrix) else Q0, dtype=float)


def _constant_rates(rate_fn):
    """Generator matrix if ``rate_fn`` is time-independent by type, else None."""
    if isinstance(rate_fn, (RateMatrix, np.ndarray)):
        return _entries(rate_fn)
    return None


def log_likelihood(path: PathRecord, rate_fn, Q0, t0: float = 0.0, t1: float | None = None
                   ) -> LikelihoodBreakdown:
    """Log density of ``path`` restricted to [t0, t1] (default the whole horizon).

    ``rate_fn`` is a constant generator (exact evaluation) or a callable
    ``(t, i) -> rate row`` (adaptive quadrature on each constant stretch).
    """
    q0 = _entries(Q0)
    t1 = path.T if t1 is None else float(t1)
    const = _constant_rates(rate_fn)

    def row(t, i):
        if const is not None:
            return const[i]
        return np.asarray(rate_fn(t, i), dtype=float)

    def diag(t, i):
        r = row(t, i)
        return -(r.sum() - r[i])

    drift = 0.0
    for s, e, i in path.segments():
        a, b = max(s, t0), min(e, t1)
        if b <= a:
            continue
        ref = -(q0[i].sum() - q0[i, i])
        if const is not None:
            drift += (diag(0.0, i) - ref) * (b - a)
        else:
            val, _ = quad(lambda u: diag(u, i) - ref, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
            drift += val

    jumps = 0.0
    prev = path.initial_state
    for tau, j in zip(path.jump_times, path.jump_states):
        if t0 < tau <= t1:
            q, r = row(tau, prev)[j], q0[prev, j]
            if q <= 0 or r <= 0:
                return LikelihoodBreakdown(float(drift), -np.inf, -np.inf)
            jumps += np.log(q) - np.log(r)
        prev = j
    return LikelihoodBreakdown(float(drift), float(jumps), float(drift + jumps))


def batch_log_likelihood(batch: PathBatch, table: RateTable, Q0) -> np.ndarray:
    """log W_T for every path of ``batch`` with controlled rates ``table``."""
    q0 = _entries(Q0)
    ref_diag = -(q0.sum(axis=1) - np.diag(q0))
    coef = table.diag_coefficients() - ref_diag[None, :, None]
    drift = integrate_along(batch, coef, table.grid)
    with np.errstate(divide="ignore"):
        jumps = kernels.jump_log_rates(batch.offsets, batch.jump_times, batch.jump_states,
                                       batch.init, table.rates, table.grid.dt)
        if batch.jump_states.size:
            counts = batch.jump_counts()
            prev = np.concatenate([[0], batch.jump_states[:-1]])
            first = batch.offsets[:-1][counts > 0]
            prev[first] = batch.init[counts > 0]
            ref = np.log(q0[prev, batch.jump_states])
            path_of = np.repeat(np.arange(batch.n), counts)
            jumps = jumps - np.bincount(path_of, weights=ref, minlength=batch.n)
    return drift + np.nan_to_num(jumps, nan=-np.inf)


def second_moment_bound(table: RateTable, Q0, t: float | None = None) -> float:
    """exp(t * sup_{s,i} sum_j (q_ij - q0_ij)^2 / q0_ij), an upper bound on E[W_t^2]."""
    q0 = _entries(Q0)
    t = table.grid.T if t is None else t
    off = ~np.eye(q0.shape[0], dtype=bool)
    adm = off & (q0 > 0)
    if np.any(table.rates[:, off & ~adm] > 0):
        return np.inf
    d = np.where(adm, (table.rates - q0) ** 2 / np.where(adm, q0, 1.0), 0.0)
    return float(np.exp(t * d.sum(axis=2).max()))


def _weighted_stats(logw: np.ndarray, values: np.ndarray):
    """Mean and standard error of W * values with a max-log shift."""
    shift = float(np.max(logw)) if np.isfinite(logw).any() else 0.0
    w = np.exp(logw - shift)
    x = w.reshape((-1,) + (1,) * (values.ndim - 1)) * values
    n = x.shape[0]
    scale = np.exp(shift)
    mean = scale * x.mean(axis=0)
    se = scale * x.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


@dataclass(frozen=True)
class ImportanceEstimate:
    estimate: float
    se: float
    n_paths: int
    mean_weight: float
    se_weight: float
    second_moment: float
    second_moment_bound: float

    def as_dict(self) -> dict:
        return asdict(self)


def importance_cost(spec, policy, p_flow, nu_flow, n_paths: int, rng, threads: int = 1
                    ) -> ImportanceEstimate:
    """Total cost of ``policy`` estimated from reference-law paths reweighted by W_T."""
    if n_paths < 100:
        raise ValueError(f"n_paths must be at least 100, got {n_paths}")
    grid = policy.grid
    q0 = spec.reference.entries
    ref_table = RateTable.constant(grid, q0)
    batch = simulate_batch(ref_table, spec.p_init, n_paths, rng,
                           lam=max(ref_table.max_exit_rate(), 1.0), threads=threads)
    table = controlled_rate_table(spec, policy, p_flow, nu_flow)
    logw = batch_log_likelihood(batch, table, q0)
    coef = running_cost_coefficients(spec, policy, p_flow, nu_flow)
    cost = path_costs(spec, batch, coef, p_flow.points[-1], grid)
    est, se = _weighted_stats(logw, cost)
    mw, sew = _weighted_stats(logw, np.ones_like(cost))
    m2, _ = _weighted_stats(2.0 * logw, np.ones_like(cost))
    return ImportanceEstimate(float(est), float(se), int(n_paths), float(mw), float(sew),
                              float(m2), second_moment_bound(table, q0))


@dataclass(frozen=True)
class ConsistencyReport:
    t: float
    reweighted: np.ndarray
    reweighted_se: np.ndarray
    direct: np.ndarray
    direct_se: np.ndarray
    exact: np.ndarray
    exact_method: str
    mean_weight: float
    mean_weight_se: float
    second_moment: float
    second_moment_bound: float
    n_paths: int

    def checks(self) -> dict:
        comb = np.sqrt(self.reweighted_se**2 + self.direct_se**2)
        return {
            "reweighted_vs_direct": bool(np.all(np.abs(self.reweighted - self.direct) <= 3 * comb + 1e-12)),
            "reweighted_vs_exact": bool(np.all(np.abs(self.reweighted - self.exact)
                                               <= 3 * self.reweighted_se + 1e-6)),
            "direct_vs_exact": bool(np.all(np.abs(self.direct - self.exact) <= 3 * self.direct_se + 1e-6)),
            "weight_mean_one": bool(abs(self.mean_weight - 1.0) <= 3 * self.mean_weight_se + 1e-12),
            "second_moment_bounded": bool(self.second_moment <= self.second_moment_bound),
        }

    @property
    def passed(self) -> bool:
        # the second-moment comparison has no error bar, so it is reported only
        c = self.checks()
        c.pop("second_moment_bounded")
        return all(c.values())

    def as_dict(self) -> dict:
        d = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(self).items()}
        d["checks"] = self.checks()
        d["passed"] = self.passed
        return d


def _tabulate(rate_fn, grid: TimeGrid, m: int) -> RateTable:
    if isinstance(rate_fn, RateTable):
        return rate_fn
    const = _constant_rates(rate_fn)
    if const is not None:
        return RateTable.constant(grid, const)
    R = np.array([[rate_fn(t, i) for i in range(m)] for t in grid.nodes])
    return RateTable(grid, R)


def measure_consistency(rate_fn, Q0, p0, t: float, n_paths: int, rng, n_steps: int = 1000,
                        threads: int = 1) -> ConsistencyReport:
    """Marginal law at time t three ways: reweighted reference paths, direct
    simulation, and the matrix exponential (RK4 flow when rates vary in time).

    Callable rates are tabulated on the grid nodes and interpolated linearly.
    """
    q0 = _entries(Q0)
    m = q0.shape[0]
    p0 = np.asarray(p0, dtype=float)
    if t <= 0:
        z = np.zeros(m)
        return ConsistencyReport(0.0, p0.copy(), z, p0.copy(), z, p0.copy(), "initial",
                                 1.0, 0.0, 1.0, 1.0, int(n_paths))
    grid = TimeGrid(float(t), n_steps)
    table = _tabulate(rate_fn, grid, m)
    ss_ref, ss_dir = as_seed_sequence(rng).spawn(2)

    ref_table = RateTable.constant(grid, q0)
    ref = simulate_batch(ref_table, p0, n_paths, ss_ref, lam=max(ref_table.max_exit_rate(), 1.0),
                         threads=threads)
    logw = batch_log_likelihood(ref, table, q0)
    ind = np.eye(m)[ref.final_states()]
    rw, rw_se = _weighted_stats(logw, ind)
    mw, mw_se = _weighted_stats(logw, np.ones(n_paths))
    m2, _ = _weighted_stats(2.0 * logw, np.ones(n_paths))

    direct = simulate_batch(table, p0, n_paths, ss_dir, threads=threads)
    freq = np.bincount(direct.final_states(), minlength=m)[:m] / n_paths
    d_se = np.sqrt(freq * (1 - freq) / max(n_paths - 1, 1))

    const = _constant_rates(rate_fn)
    if const is not None:
        Q = const.copy()
        np.fill_diagonal(Q, 0.0)
        np.fill_diagonal(Q, -Q.sum(axis=1))
        exact, method = matexp_marginal(Q, p0, t), "matexp"
    else:
        exact, method = forward_flow(table, p0, grid).points[-1], "ode"
    return ConsistencyReport(float(t), rw, rw_se, freq, d_se, np.asarray(exact), method,
                             float(mw), float(mw_se), float(m2),
                             second_moment_bound(table, q0), int(n_paths))
