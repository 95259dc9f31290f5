"""Continuous-time Markov chain primitives.

Generators, the quadratic-variation matrices psi^i with their seminorms,
exact path simulation by thinning, and forward (Kolmogorov) flows of the
marginal law. States are 0-based throughout.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from . import kernels

SIMPLEX_TOL = 1e-12
CLIP_TOL = 1e-10

RateFn = Callable[[float, int], np.ndarray]


class DimensionError(ValueError):
    """Raised for invalid state counts or mismatched shapes."""


class SimulationError(RuntimeError):
    """Raised when a rate function breaks the thinning majorant mid-simulation."""


class StepSizeError(RuntimeError):
    """Raised when the forward integrator leaves the simplex beyond tolerance."""


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if self.T < 0:
            raise ValueError(f"horizon must be nonnegative, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def interval(self, t: float) -> int:
        """Index k of the interval [t_k, t_{k+1}) holding t (last interval includes T)."""
        if self.dt == 0:
            return 0
        return int(min(max(np.floor(t / self.dt), 0), self.n_steps - 1))


@dataclass(frozen=True)
class RateMatrix:
    """Generator of a finite-state chain with an admissibility mask.

    ``mask[i, j]`` marks admissible off-diagonal transitions; the diagonal of
    ``mask`` is always False.
    """

    entries: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionError(f"generator must be square, got shape {entries.shape}")
        if mask.shape != entries.shape:
            raise DimensionError("mask shape does not match entries")
        np.fill_diagonal(mask, False)
        entries.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "mask", mask)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_offdiagonal(cls, rates, mask=None) -> "RateMatrix":
        """Build from off-diagonal rates, setting masked entries to 0 and the diagonal to minus the row sum."""
        rates = np.array(rates, dtype=float)
        m = rates.shape[0]
        if mask is None:
            mask = ~np.eye(m, dtype=bool)
        mask = np.array(mask, dtype=bool)
        q = np.where(mask, rates, 0.0)
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        return cls(q, mask)


def default_mask(m: int) -> np.ndarray:
    return ~np.eye(m, dtype=bool)


def build_reference_generator(m: int, mask=None, allow_absorbing: bool = False) -> RateMatrix:
    """Reference generator: rate 1 on every admissible transition, 0 on forbidden ones."""
    if m < 2:
        raise DimensionError(f"need at least 2 states, got m={m}")
    mask = default_mask(m) if mask is None else np.array(mask, dtype=bool)
    if mask.shape != (m, m):
        raise DimensionError(f"mask must be {m}x{m}, got {mask.shape}")
    mask = mask & ~np.eye(m, dtype=bool)
    dead = np.nonzero(~mask.any(axis=1))[0]
    if dead.size and not allow_absorbing:
        raise DimensionError(f"states {dead.tolist()} have no admissible exit; pass allow_absorbing=True")
    return RateMatrix.from_offdiagonal(np.ones((m, m)), mask)


def validate_generator(Q: RateMatrix, C1: float, C2: float) -> list[str]:
    """Return a list of violations (sign, row sum, rate bounds); empty means valid."""
    q = np.asarray(Q.entries)
    m = q.shape[0]
    problems = []
    off = ~np.eye(m, dtype=bool)
    for i, j in zip(*np.nonzero(off & (q < 0))):
        problems.append(f"sign: q[{i},{j}] = {q[i, j]:.6g} < 0")
    for i, j in zip(*np.nonzero(off & ~Q.mask & (q != 0))):
        problems.append(f"mask: q[{i},{j}] = {q[i, j]:.6g} on a forbidden transition")
    sums = q.sum(axis=1)
    for i in np.nonzero(np.abs(sums) > 1e-12)[0]:
        problems.append(f"row-sum: row {i} sums to {sums[i]:.6g}")
    adm = Q.mask
    for i, j in zip(*np.nonzero(adm & ((q < C1) | (q > C2)))):
        problems.append(f"bounds: q[{i},{j}] = {q[i, j]:.6g} outside [{C1}, {C2}]")
    return problems


def psi_matrix(i: int, Q0: RateMatrix) -> np.ndarray:
    """psi^i = diag(Q0 e_i) - Q0 diag(e_i) - diag(e_i) Q0."""
    m = Q0.m
    if not 0 <= i < m:
        raise IndexError(f"state {i} out of range for m={m}")
    q0 = np.asarray(Q0.entries)
    e = np.zeros(m)
    e[i] = 1.0
    E = np.diag(e)
    return np.diag(q0 @ e) - q0 @ E - E @ q0


def seminorm_sq(i: int, z) -> float:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or not 0 <= i < z.size:
        raise DimensionError(f"state {i} incompatible with vector of shape {z.shape}")
    d = z - z[i]
    return float(d @ d)


def psi_pinv_apply(i: int, j: int, m: int) -> np.ndarray:
    """psi^+ (e_j - e_i) for the unmasked reference chain."""
    if i == j:
        raise ValueError("psi_pinv_apply needs i != j")
    if not (0 <= i < m and 0 <= j < m):
        raise IndexError(f"states ({i}, {j}) out of range for m={m}")
    v = np.full(m, -1.0 / m)
    v[j] = (m - 1) / m
    return v


# --------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class PathRecord:
    initial_state: int
    jump_times: tuple
    jump_states: tuple
    T: float

    def __post_init__(self):
        times = tuple(float(t) for t in self.jump_times)
        states = tuple(int(s) for s in self.jump_states)
        if len(times) != len(states):
            raise ValueError("jump_times and jump_states differ in length")
        prev_t, prev_s = 0.0, int(self.initial_state)
        for t, s in zip(times, states):
            if not prev_t < t or (prev_t == 0.0 and t <= 0.0):
                raise ValueError(f"jump times must increase strictly inside (0, T]: {t}")
            if s == prev_s:
                raise ValueError(f"jump at {t} does not change state {s}")
            prev_t, prev_s = t, s
        if times and times[-1] >= self.T:
            raise ValueError("paths may not jump at the horizon")
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "jump_states", states)
        object.__setattr__(self, "initial_state", int(self.initial_state))
        object.__setattr__(self, "T", float(self.T))

    def state_at(self, t: float) -> int:
        k = np.searchsorted(self.jump_times, t, side="right")
        return self.initial_state if k == 0 else self.jump_states[k - 1]

    def segments(self):
        """Yield (start, end, state) for the constant stretches of the path."""
        starts = (0.0,) + self.jump_times
        ends = self.jump_times + (self.T,)
        states = (self.initial_state,) + self.jump_states
        return list(zip(starts, ends, states))

    def to_csv(self) -> str:
        """Rows ``time,state``: the initial condition, each jump, then ``T`` with the terminal state."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([_fmt(0.0), self.initial_state])
        for t, s in zip(self.jump_times, self.jump_states):
            w.writerow([_fmt(t), s])
        w.writerow([_fmt(self.T), self.state_at(self.T)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PathRecord":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if len(rows) < 2:
            raise ValueError("path CSV needs an initial row and a terminal row")
        t0, s0 = float(rows[0][0]), int(rows[0][1])
        if t0 != 0.0:
            raise ValueError(f"path must start at t=0, got {t0}")
        T, s_end = float(rows[-1][0]), int(rows[-1][1])
        body = rows[1:-1]
        rec = cls(s0, [float(r[0]) for r in body], [int(r[1]) for r in body], T)
        if rec.state_at(T) != s_end:
            raise ValueError("terminal row disagrees with the last jump")
        return rec


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class PathBatch:
    """Many paths in compressed form: jumps of path p are ``offsets[p]:offsets[p+1]``."""

    init: np.ndarray
    offsets: np.ndarray
    jump_times: np.ndarray
    jump_states: np.ndarray
    T: float

    @property
    def n(self) -> int:
        return self.init.shape[0]

    def record(self, p: int) -> PathRecord:
        a, b = self.offsets[p], self.offsets[p + 1]
        return PathRecord(int(self.init[p]), self.jump_times[a:b], self.jump_states[a:b], self.T)

    def records(self):
        return [self.record(p) for p in range(self.n)]

    def jump_counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def states_at(self, times) -> np.ndarray:
        q = np.ascontiguousarray(times, dtype=float)
        return kernels.states_at(self.offsets, self.jump_times, self.jump_states, self.init, q)

    def final_states(self) -> np.ndarray:
        counts = self.jump_counts()
        last = self.offsets[1:] - 1
        out = self.init.copy()
        has = counts > 0
        out[has] = self.jump_states[last[has]]
        return out

    @classmethod
    def from_records(cls, records: Sequence[PathRecord]) -> "PathBatch":
        if not records:
            raise ValueError("empty record list")
        T = records[0].T
        counts = [len(r.jump_times) for r in records]
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        times = np.array([t for r in records for t in r.jump_times], dtype=float)
        states = np.array([s for r in records for s in r.jump_states], dtype=np.int64)
        init = np.array([r.initial_state for r in records], dtype=np.int64)
        return cls(init, offsets, times, states, T)

    @staticmethod
    def concat(batches: Sequence["PathBatch"]) -> "PathBatch":
        offs, shift = [np.zeros(1, np.int64)], 0
        for b in batches:
            offs.append(b.offsets[1:] + shift)
            shift += int(b.offsets[-1])
        return PathBatch(
            np.concatenate([b.init for b in batches]),
            np.concatenate(offs),
            np.concatenate([b.jump_times for b in batches]),
            np.concatenate([b.jump_states for b in batches]),
            batches[0].T,
        )


def as_seed_sequence(rng) -> np.random.SeedSequence:
    """Normalize an int, SeedSequence or Generator into a SeedSequence."""
    if isinstance(rng, np.random.SeedSequence):
        return rng
    if isinstance(rng, np.random.Generator):
        return np.random.SeedSequence(rng.integers(0, 2**63 - 1, size=4).tolist())
    return np.random.SeedSequence(int(rng))


def _draw_initial(u: np.ndarray, p0: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p0)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, u, side="right").astype(np.int64)


def simulate_path(rate_fn: RateFn, p0, T: float, rng, lam: float) -> PathRecord:
    """One exact sample of a time-inhomogeneous chain by thinning.

    Candidate times come from a Poisson clock of rate ``lam``, which must
    dominate the total exit rate ((m-1) * C2 is always enough).
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    p0 = np.asarray(p0, dtype=float)
    init = int(_draw_initial(np.array([rng.random()]), p0)[0])
    if T <= 0:
        return PathRecord(init, (), (), max(T, 0.0))
    n_events = rng.poisson(lam * T)
    cand = np.sort(rng.uniform(0.0, T, n_events))
    us = rng.random(n_events)
    state = init
    times, states = [], []
    for t, u in zip(cand, us):
        row = np.array(rate_fn(float(t), state), dtype=float)
        row[state] = 0.0
        if (row < 0).any() or not np.isfinite(row).all():
            raise SimulationError(f"invalid rate row {row} at t={t}, state={state}")
        total = row.sum()
        if total > lam * (1 + 1e-12):
            raise SimulationError(f"exit rate {total} exceeds majorant {lam} at t={t}, state={state}")
        x = u * lam
        if x < total:
            state = int(np.argmax(np.cumsum(row) > x))
            times.append(float(t))
            states.append(state)
    return PathRecord(init, times, states, T)


# --------------------------------------------------------------------------
# batch simulation against node rate tables

CHUNK = 8192


@dataclass(frozen=True)
class RateTable:
    """Off-diagonal rates at grid nodes, linearly interpolated in time in between.

    ``rates[k, i, j]`` is the i -> j rate at node t_k (diagonal unused).
    """

    grid: TimeGrid
    rates: np.ndarray

    def __post_init__(self):
        r = np.ascontiguousarray(self.rates, dtype=float).copy()
        if r.ndim != 3 or r.shape[0] != self.grid.n_steps + 1 or r.shape[1] != r.shape[2]:
            raise DimensionError(f"rate table shape {r.shape} incompatible with grid")
        for k in range(r.shape[0]):
            np.fill_diagonal(r[k], 0.0)
        r.setflags(write=False)
        object.__setattr__(self, "rates", r)

    @property
    def m(self) -> int:
        return self.rates.shape[1]

    @classmethod
    def constant(cls, grid: TimeGrid, Q: RateMatrix | np.ndarray) -> "RateTable":
        q = np.asarray(Q.entries if isinstance(Q, RateMatrix) else Q, dtype=float)
        return cls(grid, np.broadcast_to(q, (grid.n_steps + 1,) + q.shape))

    def row(self, t: float, i: int) -> np.ndarray:
        """Interpolated rate row at time t (diagonal set to minus the exit rate)."""
        dt = self.grid.dt
        s = t / dt
        k = int(min(max(np.floor(s), 0), self.grid.n_steps - 1))
        w = s - k
        r = (1.0 - w) * self.rates[k, i] + w * self.rates[k + 1, i]
        r = r.copy()
        r[i] = -(r.sum() - r[i])
        return r

    def __call__(self, t: float, i: int) -> np.ndarray:
        return self.row(t, i)

    def generator(self, t: float) -> np.ndarray:
        """Full interpolated generator at time t."""
        s = t / self.grid.dt
        k = int(min(max(np.floor(s), 0), self.grid.n_steps - 1))
        w = s - k
        Q = (1.0 - w) * self.rates[k] + w * self.rates[k + 1]
        np.fill_diagonal(Q, -Q.sum(axis=1))
        return Q

    def max_exit_rate(self) -> float:
        return float(self.rates.sum(axis=2).max())

    def diag_coefficients(self):
        """Per-interval (left, mid, right) values of the diagonal, for path integrals."""
        d = -self.rates.sum(axis=2)
        left, right = d[:-1], d[1:]
        return np.stack([left, 0.5 * (left + right), right], axis=-1)


def cumulative_from_coefficients(coef: np.ndarray, dt: float) -> np.ndarray:
    """Node values of the running integral, Simpson on each interval."""
    inc = dt * (coef[..., 0] + 4.0 * coef[..., 1] + coef[..., 2]) / 6.0
    cum = np.zeros((coef.shape[0] + 1,) + coef.shape[1:-1])
    cum[1:] = np.cumsum(inc, axis=0)
    return cum


def integrate_along(batch: PathBatch, coef: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Integral over [0, T] of ``h(t, X_t)`` given per-interval quadratic pieces of h.

    ``coef[k, i]`` holds h at the left end, midpoint and right end of interval k
    in state i; within the interval h is the interpolating quadratic.
    """
    coef = np.ascontiguousarray(coef, dtype=float)
    cum = np.ascontiguousarray(cumulative_from_coefficients(coef, grid.dt))
    return kernels.integrate_paths(batch.offsets, batch.jump_times, batch.jump_states,
                                   batch.init, float(batch.T), cum, coef, grid.dt)


def _simulate_chunk(table: RateTable, p0: np.ndarray, n: int, ss: np.random.SeedSequence,
                    lam: float) -> PathBatch:
    rng = np.random.default_rng(ss)
    T = table.grid.T
    init = _draw_initial(rng.random(n), p0)
    counts = rng.poisson(lam * T, n)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    total = int(offsets[-1])
    times = rng.uniform(0.0, T, total)
    u = rng.random(total)
    path_of = np.repeat(np.arange(n), counts)
    order = np.lexsort((times, path_of))
    times = np.ascontiguousarray(times[order])
    new, status, bad = kernels.thin_events(offsets, times, u, init, table.rates,
                                           table.grid.dt, lam)
    if status:
        what = "negative rate" if status == 1 else "exit rate above majorant"
        raise SimulationError(f"{what} at candidate time {times[bad]:.6g}")
    keep = new >= 0
    kept_counts = np.bincount(path_of[keep], minlength=n)
    return PathBatch(
        init,
        np.concatenate([[0], np.cumsum(kept_counts)]).astype(np.int64),
        np.ascontiguousarray(times[keep]),
        np.ascontiguousarray(new[keep]),
        T,
    )


def simulate_batch(table: RateTable, p0, n_paths: int, rng, lam: float | None = None,
                   threads: int = 1) -> PathBatch:
    """Exact samples of the chain with interpolated node rates ``table``.

    Paths are generated in fixed chunks, each with its own child seed of the
    master seed, so results do not depend on ``threads``.
    """
    p0 = np.asarray(p0, dtype=float)
    if lam is None:
        lam = table.max_exit_rate()
    lam = float(lam)
    if lam <= 0:
        lam = 1.0
    master = as_seed_sequence(rng)
    sizes = [min(CHUNK, n_paths - s) for s in range(0, n_paths, CHUNK)]
    seeds = master.spawn(len(sizes))
    if threads > 1 and len(sizes) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda a: _simulate_chunk(table, p0, a[0], a[1], lam),
                                  zip(sizes, seeds)))
    else:
        parts = [_simulate_chunk(table, p0, n, ss, lam) for n, ss in zip(sizes, seeds)]
    if not parts:
        raise ValueError("n_paths must be positive")
    return parts[0] if len(parts) == 1 else PathBatch.concat(parts)


# --------------------------------------------------------------------------
# marginal flows


@dataclass(frozen=True)
class SimplexFlow:
    """Marginal law on the grid nodes; linear interpolation in between."""

    grid: TimeGrid
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] != self.grid.n_steps + 1:
            raise DimensionError(f"flow shape {pts.shape} incompatible with grid")
        if (pts < -SIMPLEX_TOL).any() or np.abs(pts.sum(axis=1) - 1).max() > 1e-10:
            raise ValueError("flow leaves the simplex")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return self.points.shape[1]

    def at(self, t: float) -> np.ndarray:
        dt = self.grid.dt
        if dt == 0:
            return self.points[0].copy()
        s = t / dt
        k = int(min(max(np.floor(s), 0), self.grid.n_steps - 1))
        w = s - k
        return (1.0 - w) * self.points[k] + w * self.points[k + 1]

    @classmethod
    def constant(cls, grid: TimeGrid, p) -> "SimplexFlow":
        p = np.asarray(p, dtype=float)
        return cls(grid, np.tile(p, (grid.n_steps + 1, 1)))


def check_simplex(p, tol: float = SIMPLEX_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or (p < -tol).any() or abs(p.sum() - 1.0) > tol:
        raise ValueError(f"not a point of the simplex: {p}")
    return p


def _project(p: np.ndarray, t: float) -> np.ndarray:
    if p.min() < -CLIP_TOL:
        raise StepSizeError(f"weight {p.min():.3g} below -{CLIP_TOL} at t={t}; reduce the step")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def generator_at(rate_fn: RateFn, t: float, m: int) -> np.ndarray:
    if isinstance(rate_fn, RateTable):
        return rate_fn.generator(t)
    if isinstance(rate_fn, (RateMatrix, np.ndarray)):
        q = np.array(rate_fn.entries if isinstance(rate_fn, RateMatrix) else rate_fn, dtype=float)
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        return q
    return np.array([rate_fn(t, i) for i in range(m)], dtype=float)


def forward_flow(rate_fn: RateFn, p0, grid: TimeGrid) -> SimplexFlow:
    """RK4 for dp/dt = Q(t)^T p with a simplex projection after each step."""
    p = check_simplex(p0, 1e-10).copy()
    m = p.size
    dt = grid.dt
    out = np.empty((grid.n_steps + 1, m))
    out[0] = p
    for k in range(grid.n_steps):
        t = k * dt
        Q0 = generator_at(rate_fn, t, m)
        Qh = generator_at(rate_fn, t + 0.5 * dt, m)
        Q1 = generator_at(rate_fn, t + dt, m)
        k1 = p @ Q0
        k2 = (p + 0.5 * dt * k1) @ Qh
        k3 = (p + 0.5 * dt * k2) @ Qh
        k4 = (p + dt * k3) @ Q1
        p = _project(p + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), t + dt)
        out[k + 1] = p
    return SimplexFlow(grid, out)


def matexp_marginal(Q: RateMatrix | np.ndarray, p0, t: float) -> np.ndarray:
    """p_t = exp(t Q^T) p0 for a constant generator (scaling and squaring Pade)."""
    q = np.asarray(Q.entries if isinstance(Q, RateMatrix) else Q, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    return p0 @ expm(t * q)
