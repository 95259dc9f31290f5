"""Finite-player games built from a mean field solution.

Each of N players runs the equilibrium feedback on its own state, so the
players are independent chains; their empirical state and control laws
should approach the mean field at rate m/(4N) in mean square. The module
also estimates what a single player gains by deviating, and checks the
Kronecker-sum identities behind the multi-chain value equations.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .equilibrium import EquilibriumSolution
from .girsanov import batch_log_likelihood, second_moment_bound
from .hjb import PolicySurface, _terminal, controlled_rate_table
from .markov import (PathBatch, RateMatrix, RateTable, SimplexFlow, as_seed_sequence,
                     build_reference_generator, psi_matrix, seminorm_sq, simulate_batch)
from .measures import ControlFlow, pushforward_policy, w1
from .model import ProblemSpec, StructuralError

KRON_CAP = 4096


def _require_decoupled_rates(spec: ProblemSpec):
    if spec.mean_field_in_q:
        raise StructuralError("N-player simulation needs rates free of the mean fields")


@dataclass(frozen=True)
class NPlayerRun:
    N: int
    batch: PathBatch
    empirical_p: SimplexFlow
    empirical_nu: ControlFlow
    seed: object

    @property
    def paths(self):
        return self.batch.records()


def node_states(batch: PathBatch, grid) -> np.ndarray:
    """States of every path at every grid node, shape (n_paths, K + 1)."""
    return batch.states_at(grid.nodes)


def _counts(states: np.ndarray, m: int) -> np.ndarray:
    """Per-node state counts; states (n, K + 1) -> (K + 1, m)."""
    K1 = states.shape[1]
    flat = states.T + m * np.arange(K1)[:, None]
    return np.bincount(flat.ravel(), minlength=m * K1).reshape(K1, m)


def simulate_nplayer(spec: ProblemSpec, sol: EquilibriumSolution, N: int, rng,
                     threads: int = 1) -> NPlayerRun:
    """N independent players under the equilibrium feedback, with empirical fields at the nodes."""
    _require_decoupled_rates(spec)
    if N < 1:
        raise ValueError("N must be at least 1")
    grid = sol.grid
    table = controlled_rate_table(spec, sol.policy, sol.p_flow, sol.nu_flow)
    batch = simulate_batch(table, spec.p_init, N, rng, lam=spec.majorant, threads=threads)
    p = _counts(node_states(batch, grid), spec.m) / N
    nus = tuple(pushforward_policy(sol.policy.a[k], p[k]) for k in range(grid.n_steps + 1))
    return NPlayerRun(N, batch, SimplexFlow(grid, p), ControlFlow(grid, nus), rng)


def _w1_same_atoms(atoms: np.ndarray, wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
    """W1 between sum_i wa_i delta_{atoms_i} and sum_i wb_i delta_{atoms_i} on the line.

    atoms (K, m); wa, wb (..., K, m). Vectorized over leading axes.
    """
    order = np.argsort(atoms, axis=-1, kind="mergesort")
    x = np.take_along_axis(atoms, order, axis=-1)
    d = np.take_along_axis(wa - wb, np.broadcast_to(order, wa.shape), axis=-1)
    cdf = np.cumsum(d, axis=-1)[..., :-1]
    return np.sum(np.abs(cdf) * np.diff(x, axis=-1), axis=-1)


@dataclass(frozen=True)
class ChaosReport:
    N_list: tuple
    reps: int
    mse_state: np.ndarray      # sup over nodes of the per-node mean squared error
    se_state: np.ndarray       # its standard error at the maximizing node
    mse_w1: np.ndarray         # same for the squared W1 control error
    se_w1: np.ndarray
    bound: np.ndarray          # m / (4N)
    bound_ok: np.ndarray       # per-node mse <= bound + 3 se at every node
    mse_state_nodes: np.ndarray  # (len(N_list), K + 1)
    se_state_nodes: np.ndarray
    mse_state_avg: np.ndarray  # time-averaged per-node mse
    slope_state: float
    slope_w1: float

    def rows(self):
        for j, N in enumerate(self.N_list):
            yield (N, self.mse_state[j], self.se_state[j], self.mse_w1[j], self.se_w1[j], self.bound[j])


def _slope(N, y) -> float:
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(N), np.log(y), 1)[0])


def chaos_error(spec: ProblemSpec, sol: EquilibriumSolution, N_list, reps: int, rng,
                threads: int = 1) -> ChaosReport:
    """Mean squared distance between empirical and equilibrium fields, per N."""
    _require_decoupled_rates(spec)
    N_list = tuple(int(n) for n in N_list)
    if list(N_list) != sorted(set(N_list)):
        raise ValueError("N_list must be strictly increasing")
    grid = sol.grid
    table = controlled_rate_table(spec, sol.policy, sol.p_flow, sol.nu_flow)
    p_star = sol.p_flow.points
    a = sol.policy.a
    seeds = as_seed_sequence(rng).spawn(len(N_list))
    out = {k: [] for k in ("ms", "ss", "mw", "sw", "ok", "nodes", "nodes_se", "avg")}
    for N, ss in zip(N_list, seeds):
        batch = simulate_batch(table, spec.p_init, N * reps, ss, lam=spec.majorant, threads=threads)
        st = node_states(batch, grid).reshape(reps, N, -1)
        pN = np.stack([_counts(st[r], spec.m) for r in range(reps)]) / N   # (reps, K+1, m)
        err = ((pN - p_star[None]) ** 2).sum(axis=-1)                     # (reps, K+1)
        if spec.l == 1:
            w = _w1_same_atoms(a[..., 0], pN, p_star[None]) ** 2
        else:
            w = np.array([[w1(pushforward_policy(a[k], pN[r, k]), pushforward_policy(a[k], p_star[k])) ** 2
                           for k in range(grid.n_steps + 1)] for r in range(reps)])
        mse, se = err.mean(axis=0), err.std(axis=0, ddof=1) / np.sqrt(reps)
        mw, sw = w.mean(axis=0), w.std(axis=0, ddof=1) / np.sqrt(reps)
        j, jw = int(np.argmax(mse)), int(np.argmax(mw))
        bound = spec.m / (4.0 * N)
        out["ms"].append(mse[j]); out["ss"].append(se[j])
        out["mw"].append(mw[jw]); out["sw"].append(sw[jw])
        out["ok"].append(bool(np.all(mse <= bound + 3 * se)))
        out["nodes"].append(mse); out["nodes_se"].append(se); out["avg"].append(mse.mean())
    Ns = np.array(N_list, dtype=float)
    ms, mw = np.array(out["ms"]), np.array(out["mw"])
    return ChaosReport(N_list, reps, ms, np.array(out["ss"]), mw, np.array(out["sw"]),
                       spec.m / (4.0 * Ns), np.array(out["ok"]), np.array(out["nodes"]),
                       np.array(out["nodes_se"]), np.array(out["avg"]), _slope(Ns, ms), _slope(Ns, mw))


# --------------------------------------------------------------------------
# unilateral deviations


@dataclass(frozen=True)
class DeviationReport:
    N: int
    names: tuple
    gain: np.ndarray     # J(deviation) - J(a_hat): positive means the deviation does not pay
    se: np.ndarray
    cost_ahat: float
    n_mc: int

    @property
    def profit(self) -> np.ndarray:
        return -self.gain

    @property
    def max_profit(self) -> float:
        """Largest estimated improvement any deviation achieves (never below 0, a_hat is included)."""
        return float(max(0.0, self.profit.max()))

    def rows(self):
        for name, g, s in zip(self.names, self.gain, self.se):
            yield (name, g, s, self.N)


def _own_costs(spec, t, beta, P, nu_fn):
    """Running cost of the deviating player in each own state.

    P has shape (R, m, m): P[r, i] is the empirical state law when the player
    sits in state i. Returns (R, m).
    """
    R, m = P.shape[0], spec.m
    out = np.empty((R, m))
    for i in range(m):
        if spec.vectorized and spec.f2 is None:
            out[:, i] = np.asarray(spec.cost_vector(t, beta, P[:, i]), dtype=float)[..., i]
        else:
            for r in range(R):
                out[r, i] = spec.cost_vector(t, beta, P[r, i], nu_fn(r, i))[i]
    return out


def _conditional_costs(spec, grid, beta: PolicySurface, counts, a_hat, N) -> np.ndarray:
    """E[cost of player 1 under beta | paths of the other N - 1 players], per run.

    counts (R, K + 1, m) are the other players' state counts at the nodes,
    held constant on each grid interval. The conditional cost solves a
    linear backward equation on the deviating player's own state.
    """
    R = counts.shape[0]
    m, K, dt = spec.m, grid.n_steps, grid.dt
    eye = np.eye(m)
    V = np.empty((R, m))
    PT = (counts[:, K][:, None, :] + eye[None]) / N
    for i in range(m):
        V[:, i] = np.asarray(spec.g(i, PT[:, i]), dtype=float)

    def make_nu(k, beta_k):
        def nu_fn(r, i):
            c = counts[r, k]
            atoms = np.concatenate([a_hat[k], beta_k[i][None]], axis=0)
            return pushforward_policy(atoms, np.concatenate([c, [1.0]]) / N)
        return nu_fn

    for k in range(K - 1, -1, -1):
        Pk = (counts[:, k][:, None, :] + eye[None]) / N
        stages = []
        for t, b in ((k + 1) * dt, beta.a[k + 1]), ((k + 0.5) * dt, beta.at_all((k + 0.5) * dt)), \
                    (k * dt, beta.a[k]):
            Q = spec.rate_matrix(t, b, spec.p_init)
            stages.append((Q, _own_costs(spec, t, b, Pk, make_nu(k, b))))
        (Q1, f1), (Qh, fh), (Q0, f0) = stages
        v = V
        d1 = f1 + v @ Q1.T
        d2 = fh + (v + 0.5 * dt * d1) @ Qh.T
        d3 = fh + (v + 0.5 * dt * d2) @ Qh.T
        d4 = f0 + (v + dt * d3) @ Q0.T
        V = v + dt / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4)
    return V @ spec.p_init


def deviation_gain(spec: ProblemSpec, sol: EquilibriumSolution, N: int, deviations, n_mc: int,
                   rng, names=None, threads: int = 1) -> DeviationReport:
    """Cost change for player 1 switching from the equilibrium feedback to each deviation.

    The other N - 1 players follow the equilibrium feedback. Their paths are
    simulated once and shared by every deviation (common random numbers);
    player 1's expected cost given those paths is computed exactly from its
    own backward equation, so the a_hat deviation has gain exactly 0.
    """
    _require_decoupled_rates(spec)
    if N < 2:
        raise ValueError("a deviation test needs N >= 2")
    grid = sol.grid
    table = controlled_rate_table(spec, sol.policy, sol.p_flow, sol.nu_flow)
    others = simulate_batch(table, spec.p_init, n_mc * (N - 1), rng, lam=spec.majorant,
                            threads=threads)
    st = node_states(others, grid).reshape(n_mc, N - 1, -1)
    counts = np.stack([_counts(st[r], spec.m) for r in range(n_mc)]).astype(float)
    base = _conditional_costs(spec, grid, sol.policy, counts, sol.policy.a, N)
    names = tuple(names) if names is not None else tuple(f"dev{j}" for j in range(len(deviations)))
    gains, ses = [], []
    for beta in deviations:
        c = _conditional_costs(spec, grid, beta, counts, sol.policy.a, N)
        d = c - base
        gains.append(d.mean())
        ses.append(d.std(ddof=1) / np.sqrt(n_mc) if n_mc > 1 else 0.0)
    return DeviationReport(N, names, np.array(gains), np.array(ses), float(base.mean()), n_mc)


def deviation_grid(spec: ProblemSpec, sol: EquilibriumSolution, n: int = 25,
                   sizes=(0.005, 0.01, 0.02, 0.05, 0.1, 0.2)):
    """Deviations around a_hat: a_hat itself, then +-size shifts in all states and in each
    state alone (cycling through states), then constant box corners. The first ``n`` are kept."""
    lo, hi = spec.box[:, 0], spec.box[:, 1]
    a = sol.policy.a
    out = [("a_hat", sol.policy)]
    signed = [sg * d for d in sizes for sg in (1.0, -1.0)]
    for s in signed:
        out.append((f"all{s:+g}", PolicySurface(sol.grid, np.clip(a + s, lo, hi))))
    for i in range(spec.m):
        for s in signed:
            b = a.copy()
            b[:, i] = np.clip(b[:, i] + s, lo, hi)
            out.append((f"state{i}{s:+g}", PolicySurface(sol.grid, b)))
    for name, c in (("corner_lo", lo), ("corner_hi", hi)):
        out.append((name, PolicySurface.constant(sol.grid, np.tile(c, (spec.m, 1)))))
    if n > len(out):
        raise ValueError(f"at most {len(out)} deviations available")
    return out[:n]


def profile_second_moment(spec: ProblemSpec, sol: EquilibriumSolution, n_paths: int, rng) -> dict:
    """E[W_T^2] of one player's equilibrium law against the reference law, with its bound."""
    grid = sol.grid
    q0 = spec.reference.entries
    ref = RateTable.constant(grid, q0)
    batch = simulate_batch(ref, spec.p_init, n_paths, rng, lam=max(ref.max_exit_rate(), 1.0))
    table = controlled_rate_table(spec, sol.policy, sol.p_flow, sol.nu_flow)
    logw = 2.0 * batch_log_likelihood(batch, table, q0)
    shift = logw.max()
    x = np.exp(logw - shift)
    return {"second_moment": float(np.exp(shift) * x.mean()),
            "se": float(np.exp(shift) * x.std(ddof=1) / np.sqrt(n_paths)),
            "bound": second_moment_bound(table, q0), "n_paths": int(n_paths)}


# --------------------------------------------------------------------------
# Kronecker identities for independent chains


def _as_entries(Q) -> np.ndarray:
    return np.asarray(Q.entries if isinstance(Q, RateMatrix) else Q, dtype=float)


def kron_generator(Qs) -> RateMatrix:
    """Generator of independent chains on the product space: sum_n I x .. x Q_n x .. x I.

    The first factor is the slowest-varying index of the product state.
    """
    mats = [_as_entries(Q) for Q in Qs]
    if len(mats) < 2:
        raise ValueError("a Kronecker-sum generator needs at least two factors")
    dims = [q.shape[0] for q in mats]
    total = int(np.prod(dims))
    if total > KRON_CAP:
        raise ValueError(f"product dimension {total} exceeds the cap {KRON_CAP}")
    out = np.zeros((total, total))
    for n, q in enumerate(mats):
        left = np.eye(int(np.prod(dims[:n])))
        right = np.eye(int(np.prod(dims[n + 1:])))
        out += np.kron(np.kron(left, q), right)
    mask = (out != 0) | np.eye(total, dtype=bool)
    return RateMatrix(out, mask)


def brute_force_joint_generator(Qs) -> np.ndarray:
    """Joint generator by enumerating product states; only one coordinate moves per jump."""
    mats = [_as_entries(Q) for Q in Qs]
    dims = [q.shape[0] for q in mats]
    states = list(itertools.product(*[range(d) for d in dims]))
    index = {s: k for k, s in enumerate(states)}
    out = np.zeros((len(states), len(states)))
    for s in states:
        for n, q in enumerate(mats):
            for j in range(dims[n]):
                if j != s[n]:
                    t = s[:n] + (j,) + s[n + 1:]
                    out[index[s], index[t]] += q[s[n], j]
        out[index[s], index[s]] = -out[index[s]].sum()
    return out


def kron_psi_identity(states, z_tilde, dims=None, Qs=None, tol: float = 1e-12) -> bool:
    """Check the two-chain splitting of the psi matrix and of its seminorm (symmetric factors).

    With x = e_i (x) e_j and reference factors Q1, Q2:
    psi(x) = psi1(e_i) (x) diag(e_j) + diag(e_i) (x) psi2(e_j), and
    |z|_x^2 = |(I (x) e_j^T) z|_{e_i}^2 + |(e_i^T (x) I) z|_{e_j}^2.
    """
    z = np.asarray(z_tilde, dtype=float)
    if Qs is None:
        if dims is None:
            m = int(round(np.sqrt(z.size)))
            dims = (m, m)
        Qs = [build_reference_generator(d) for d in dims]
    if len(Qs) != 2 or len(states) != 2:
        raise ValueError("the identity is checked for two factors")
    Q1, Q2 = (_as_entries(q) for q in Qs)
    m1, m2 = Q1.shape[0], Q2.shape[0]
    if z.size != m1 * m2:
        raise ValueError(f"z has {z.size} entries, expected {m1 * m2}")
    i, j = int(states[0]), int(states[1])
    joint = kron_generator([Q1, Q2])
    psi_joint = psi_matrix(i * m2 + j, joint)
    e1, e2 = np.eye(m1)[i], np.eye(m2)[j]
    psi_split = (np.kron(psi_matrix(i, RateMatrix(Q1, Q1 > 0)), np.diag(e2))
                 + np.kron(np.diag(e1), psi_matrix(j, RateMatrix(Q2, Q2 > 0))))
    lhs = float(z @ psi_joint @ z)
    Z = z.reshape(m1, m2)
    rhs = _seminorm(Q1, i, Z[:, j]) + _seminorm(Q2, j, Z[i, :])
    scale = max(1.0, float(z @ z))
    return bool(np.abs(psi_joint - psi_split).max() <= tol and abs(lhs - rhs) <= tol * scale)


def _seminorm(Q, i, z) -> float:
    """sum over neighbours j of i (rate > 0) of q_ij (z_j - z_i)^2."""
    if np.all((Q[i] == 1.0) | (np.arange(Q.shape[0]) == i)):
        return seminorm_sq(i, z)
    d = z - z[i]
    w = np.where(np.arange(Q.shape[0]) == i, 0.0, Q[i])
    return float(w @ (d * d))
