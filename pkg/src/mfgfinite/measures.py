"""Discrete probability measures on the control set and the W1 distance."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .markov import TimeGrid

MERGE_TOL = 1e-12
LP_ATOM_CAP = 64


class UnsupportedMeasure(ValueError):
    """Raised when an exact W1 computation is outside the supported size."""


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported measure: ``atoms`` (k, l) with ``weights`` (k,) summing to one."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        w = np.array(self.weights, dtype=float)
        if atoms.shape[0] != w.shape[0] or w.ndim != 1:
            raise ValueError(f"{atoms.shape[0]} atoms but {w.shape} weights")
        if w.size == 0:
            raise ValueError("measure needs at least one atom")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be nonnegative and sum to 1, got sum {w.sum()!r}")
        atoms.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    @classmethod
    def dirac(cls, a) -> "DiscreteMeasure":
        return cls(np.atleast_2d(np.asarray(a, dtype=float)).reshape(1, -1), [1.0])

    @classmethod
    def merged(cls, atoms, weights, drop_below: float = 0.0) -> "DiscreteMeasure":
        """Build a measure, merging atoms closer than ``MERGE_TOL`` coordinate-wise."""
        atoms = np.array(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        w = np.array(weights, dtype=float)
        keep = w > drop_below
        atoms, w = atoms[keep], w[keep]
        if w.size == 0:
            raise ValueError("all atoms have zero weight")
        order = np.lexsort(atoms.T[::-1])
        atoms, w = atoms[order], w[order]
        out_a, out_w = [atoms[0]], [w[0]]
        for a, x in zip(atoms[1:], w[1:]):
            if np.all(np.abs(a - out_a[-1]) <= MERGE_TOL):
                out_w[-1] += x
            else:
                out_a.append(a)
                out_w.append(x)
        out_w = np.array(out_w)
        return cls(np.array(out_a), out_w / out_w.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for a, x in zip(self.atoms, self.weights):
            w.writerow([format(v, ".17g") for v in a] + [format(x, ".17g")])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DiscreteMeasure":
        rows = [[float(v) for v in r] for r in csv.reader(io.StringIO(text)) if r]
        arr = np.array(rows)
        return cls(arr[:, :-1], arr[:, -1])


def mixture(mu: DiscreteMeasure, nu: DiscreteMeasure, theta: float) -> DiscreteMeasure:
    """(1 - theta) mu + theta nu on the union of supports; atoms are never moved."""
    atoms = np.vstack([mu.atoms, nu.atoms])
    w = np.concatenate([(1.0 - theta) * mu.weights, theta * nu.weights])
    return DiscreteMeasure.merged(atoms, w, drop_below=1e-15)


def _w1_line(x, wx, y, wy) -> float:
    pts = np.concatenate([x, y])
    order = np.argsort(pts, kind="mergesort")
    pts = pts[order]
    jump = np.concatenate([wx, -wy])[order]
    cdf_diff = np.cumsum(jump)[:-1]
    return float(np.sum(np.abs(cdf_diff) * np.diff(pts)))


def w1_lp(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact transport cost as a linear program (Euclidean ground metric)."""
    a, b = mu.weights, nu.weights
    C = np.linalg.norm(mu.atoms[:, None, :] - nu.atoms[None, :, :], axis=-1)
    k, n = C.shape
    A_eq = np.zeros((k + n, k * n))
    for i in range(k):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[k + j, j::n] = 1.0
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None),
                  method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def w1(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Wasserstein-1 distance; quantile coupling on the line, exact LP above."""
    if mu.dim != nu.dim:
        raise ValueError(f"control dimensions differ: {mu.dim} vs {nu.dim}")
    if mu.dim == 1:
        return _w1_line(mu.atoms[:, 0], mu.weights, nu.atoms[:, 0], nu.weights)
    if max(mu.atoms.shape[0], nu.atoms.shape[0]) > LP_ATOM_CAP:
        raise UnsupportedMeasure(f"exact W1 in dimension {mu.dim} is capped at {LP_ATOM_CAP} atoms")
    return w1_lp(mu, nu)


def empirical_states(states: Sequence[int], m: int) -> np.ndarray:
    states = np.asarray(states, dtype=np.int64)
    if states.size == 0:
        raise ValueError("empty state list")
    return np.bincount(states, minlength=m)[:m] / states.size


def empirical_controls(controls) -> DiscreteMeasure:
    controls = np.asarray(controls, dtype=float)
    if controls.size == 0:
        raise ValueError("empty control list")
    if controls.ndim == 1:
        controls = controls[:, None]
    n = controls.shape[0]
    return DiscreteMeasure.merged(controls, np.full(n, 1.0 / n))


def pushforward_policy(a, p) -> DiscreteMeasure:
    """Law of the feedback control when the state has law p: sum_i p_i delta_{a_i}."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    p = np.asarray(p, dtype=float)
    if a.shape[0] != p.shape[0]:
        raise ValueError(f"{a.shape[0]} controls for {p.shape[0]} states")
    return DiscreteMeasure.merged(a, p, drop_below=0.0)


@dataclass(frozen=True)
class ControlFlow:
    """One measure per grid node, held constant on [t_k, t_{k+1})."""

    grid: TimeGrid
    measures: tuple

    def __post_init__(self):
        ms = tuple(self.measures)
        if len(ms) != self.grid.n_steps + 1:
            raise ValueError(f"{len(ms)} measures for {self.grid.n_steps + 1} nodes")
        object.__setattr__(self, "measures", ms)

    def at(self, t: float) -> DiscreteMeasure:
        return self.measures[self.grid.interval(t)]

    def on_interval(self, k: int) -> DiscreteMeasure:
        return self.measures[k]

    @classmethod
    def constant(cls, grid: TimeGrid, nu: DiscreteMeasure) -> "ControlFlow":
        return cls(grid, (nu,) * (grid.n_steps + 1))
