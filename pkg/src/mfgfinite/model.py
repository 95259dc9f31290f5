"""Problem data, Hamiltonians and their minimization, structural checks.

A :class:`ProblemSpec` carries the rate split ``q = q0 + q1 . alpha`` and the
cost split ``f = f0 + f1 + f2`` as plain callables. JSON configs map onto a
few parametric families through :func:`spec_from_config`; custom callables
can be passed to the constructor directly.

Callable signatures (states 0-based, ``p`` a length-m probability vector):

* ``q0(t, i, p, nu) -> (m,)`` off-diagonal rates out of i (diagonal ignored)
* ``q1(t, i, p) -> (m, l)`` rate sensitivity to the control
* ``f0(t, i, alpha, p)``, ``f0_grad(t, i, alpha, p) -> (l,)``
* ``f1(t, i, p)``, ``g(i, p)`` (families accept a batch of p with shape (..., m))
* ``f2(t, p, nu)`` with ``nu`` a :class:`DiscreteMeasure`
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .markov import RateMatrix, build_reference_generator, check_simplex, seminorm_sq
from .measures import DiscreteMeasure, w1

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class StructuralError(ValueError):
    """Raised when a spec lacks the structure an operation needs."""


class UniquenessWarning(UserWarning):
    """The Hamiltonian minimizer looks non-unique at machine tolerance."""


@dataclass(frozen=True)
class ProblemSpec:
    m: int
    T: float
    box: np.ndarray
    rate_bounds: tuple
    q0: Callable
    q1: Callable
    f0: Callable
    f1: Callable
    g: Callable
    p_init: np.ndarray
    gamma: float
    f0_grad: Optional[Callable] = None
    f2: Optional[Callable] = None
    quadratic: Optional[Callable] = None
    mask: Optional[np.ndarray] = None
    mean_field_in_q: bool = False
    f0_uses_p: bool = False
    vectorized: bool = False
    rates_vec: Optional[Callable] = None
    cost_vec: Optional[Callable] = None
    argmin_vec: Optional[Callable] = None
    name: str = "custom"
    config: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        box = np.atleast_2d(np.asarray(self.box, dtype=float))
        if box.shape[1] != 2 or (box[:, 0] > box[:, 1]).any():
            raise ValueError(f"control box must be (l, 2) with lo <= hi, got {box.tolist()}")
        object.__setattr__(self, "box", box)
        mask = np.ones((self.m, self.m), bool) if self.mask is None else np.array(self.mask, bool)
        np.fill_diagonal(mask, False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "p_init", check_simplex(self.p_init, 1e-12))
        object.__setattr__(self, "rate_bounds", tuple(float(c) for c in self.rate_bounds))
        object.__setattr__(self, "_reference", build_reference_generator(self.m, mask))
        object.__setattr__(self, "_maskf", mask.astype(float))

    @property
    def l(self) -> int:
        return self.box.shape[0]

    @property
    def C1(self) -> float:
        return self.rate_bounds[0]

    @property
    def C2(self) -> float:
        return self.rate_bounds[1]

    @property
    def reference(self) -> RateMatrix:
        return self._reference

    @property
    def majorant(self) -> float:
        """Poisson clock rate dominating every exit rate: (m - 1) * C2."""
        return (self.m - 1) * self.C2

    def in_box(self, alpha, tol: float = 1e-12) -> bool:
        a = np.asarray(alpha, dtype=float).reshape(-1)
        return bool(np.all(a >= self.box[:, 0] - tol) and np.all(a <= self.box[:, 1] + tol))

    def clamp(self, alpha) -> np.ndarray:
        return np.clip(np.asarray(alpha, dtype=float).reshape(-1), self.box[:, 0], self.box[:, 1])

    def rate_row(self, t, i, alpha, p, nu=None) -> np.ndarray:
        """Row i of Q(t, alpha, p, nu): masked entries 0, diagonal minus the exit rate."""
        a = np.asarray(alpha, dtype=float).reshape(-1)
        r = np.asarray(self.q0(t, i, p, nu), dtype=float) + np.asarray(self.q1(t, i, p), dtype=float) @ a
        r = np.where(self.mask[i], r, 0.0)
        r[i] = -r.sum()
        return r

    def running_cost(self, t, i, alpha, p, nu=None) -> float:
        c = self.f0(t, i, alpha, p) + self.f1(t, i, p)
        if self.f2 is not None:
            if nu is None:
                raise StructuralError("this spec has a control mean-field cost; pass nu")
            c = c + self.f2(t, p, nu)
        return float(c)

    def f0_gradient(self, t, i, alpha, p) -> np.ndarray:
        if self.f0_grad is not None:
            return np.asarray(self.f0_grad(t, i, alpha, p), dtype=float).reshape(-1)
        a = np.asarray(alpha, dtype=float).reshape(-1)
        h = 1e-6
        grad = np.empty_like(a)
        for k in range(a.size):
            e = np.zeros_like(a)
            e[k] = h
            grad[k] = (self.f0(t, i, a + e, p) - self.f0(t, i, a - e, p)) / (2 * h)
        return grad

    def rate_matrix(self, t, alpha, p, nu=None) -> np.ndarray:
        """Q(t) with row i driven by control alpha[i] (alpha shape (m, l))."""
        alpha = np.asarray(alpha, dtype=float).reshape(self.m, self.l)
        if self.rates_vec is not None:
            Q = self.rates_vec(t, alpha, p, nu) * self._maskf
            Q.flat[:: self.m + 1] = -Q.sum(axis=1)
            return Q
        return np.array([self.rate_row(t, i, alpha[i], p, nu) for i in range(self.m)])

    def cost_vector(self, t, alpha, p, nu=None) -> np.ndarray:
        """Running cost in every state, state i using control alpha[i]."""
        alpha = np.asarray(alpha, dtype=float).reshape(self.m, self.l)
        if self.cost_vec is not None:
            c = np.asarray(self.cost_vec(t, alpha, p), dtype=float)
            if self.f2 is not None:
                if nu is None:
                    raise StructuralError("this spec has a control mean-field cost; pass nu")
                c = c + self.f2(t, p, nu)
            return c
        return np.array([self.running_cost(t, i, alpha[i], p, nu) for i in range(self.m)])

    def argmin_all(self, t, z, p) -> np.ndarray:
        """Hamiltonian minimizer in every state, shape (m, l)."""
        if self.argmin_vec is not None:
            return np.asarray(self.argmin_vec(t, np.asarray(z, dtype=float), p), dtype=float)
        return np.array([minimize_hamiltonian(self, t, i, z, p, with_value=False).alpha
                         for i in range(self.m)])

    def argmin_f0(self, t=0.0, i=0, p=None) -> np.ndarray:
        """Control minimizing f0 alone (what an agent does when values are flat)."""
        p = self.p_init if p is None else p
        return minimize_hamiltonian(self, t, i, np.zeros(self.m), p, with_value=False).alpha


# --------------------------------------------------------------------------
# Hamiltonians


def _coupling(spec: ProblemSpec, t, i, z, p) -> np.ndarray:
    """Sum over j != i of (z_j - z_i) q1_ij: the control-dependent slope of H_i."""
    z = np.asarray(z, dtype=float)
    d = np.where(spec.mask[i], z - z[i], 0.0)
    return d @ np.asarray(spec.q1(t, i, p), dtype=float)


def hamiltonian(spec: ProblemSpec, t, i, z, alpha, p, nu=None) -> float:
    """H_i = f + sum_{j != i} (z_j - z_i)(q_ij - q0_ij) with the mask-aware reference rates."""
    if not spec.in_box(alpha):
        raise ValueError(f"control {alpha} outside the box {spec.box.tolist()}")
    z = np.asarray(z, dtype=float)
    row = spec.rate_row(t, i, alpha, p, nu)
    ref = spec.reference.entries[i]
    d = z - z[i]
    d[i] = 0.0
    return spec.running_cost(t, i, alpha, p, nu) + float(d @ (row - ref))


def hjb_driver(spec: ProblemSpec, t, i, z, alpha, p, nu=None) -> float:
    """f + sum_{j != i} q_ij (z_j - z_i): the controlled-rate form of the HJB driver."""
    z = np.asarray(z, dtype=float)
    row = spec.rate_row(t, i, alpha, p, nu)
    d = z - z[i]
    d[i] = 0.0
    return spec.running_cost(t, i, alpha, p, nu) + float(d @ row)


@dataclass
class MinResult:
    alpha: np.ndarray
    h_min: Optional[float]
    converged: bool = True
    iterations: int = 0


def _reduced(spec, t, i, p, c):
    """alpha -> f0 + c . alpha, the only control-dependent part of H_i."""
    return lambda a: float(spec.f0(t, i, a, p)) + float(c @ a)


def _golden(fun, lo, hi, tol=1e-13, max_iter=200):
    a, b = lo, hi
    x1, x2 = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    f1, f2 = fun(x1), fun(x2)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = fun(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = fun(x2)
    return 0.5 * (a + b)


def _projected_gradient(spec, t, i, p, c, max_iter=500, tol=1e-12):
    """Spectral projected gradient: Barzilai-Borwein steps with a nonmonotone Armijo test."""
    lo, hi = spec.box[:, 0], spec.box[:, 1]
    phi = _reduced(spec, t, i, p, c)
    x = spec.clamp(0.5 * (lo + hi))
    fx = phi(x)
    grad = spec.f0_gradient(t, i, x, p) + c
    step = 1.0
    recent = [fx]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.abs(x - np.clip(x - grad, lo, hi)).max() <= tol:
            converged = True
            break
        d = np.clip(x - step * grad, lo, hi) - x
        slope = float(grad @ d)
        lam, fmax = 1.0, max(recent[-10:])
        while True:
            y = np.clip(x + lam * d, lo, hi)
            fy = phi(y)
            if fy <= fmax + 1e-4 * lam * slope or lam < 1e-12:
                break
            lam *= 0.5
        g_new = spec.f0_gradient(t, i, y, p) + c
        s_k, y_k = y - x, g_new - grad
        sy = float(s_k @ y_k)
        step = float(s_k @ s_k) / sy if sy > 0 else 1e6
        step = min(max(step, 1e-10), 1e6)
        if not np.any(s_k):
            converged = True
            x, fx, grad = y, fy, g_new
            break
        x, fx, grad = y, fy, g_new
        recent.append(fx)
    if not converged:
        # coordinate-wise golden-section polish as a fallback
        for k in range(x.size):
            def along(v, k=k):
                y = x.copy()
                y[k] = v
                return phi(y)

            v = _golden(along, lo[k], hi[k])
            if along(v) < fx:
                x[k] = v
                fx = along(v)
    return x, converged, it


def _corner_ties(spec, phi, x):
    lo, hi = spec.box[:, 0], spec.box[:, 1]
    on_corner = np.all((np.abs(x - lo) <= 1e-12) | (np.abs(x - hi) <= 1e-12))
    if not on_corner or spec.l > 4:
        return x
    corners = [np.array(c) for c in itertools.product(*zip(lo, hi))]
    vals = np.array([phi(c) for c in corners])
    best = vals.min()
    ties = [c for c, v in zip(corners, vals) if v - best <= 1e-9]
    if len(ties) > 1:
        warnings.warn(f"Hamiltonian minimizer not unique: {len(ties)} box corners within 1e-9",
                      UniquenessWarning, stacklevel=3)
        exact = sorted((c for c, v in zip(corners, vals) if v == best), key=tuple)
        return exact[0]
    return x


def minimize_hamiltonian(spec: ProblemSpec, t, i, z, p, nu=None, method: str = "auto",
                         with_value: bool = True) -> MinResult:
    """Minimize alpha -> H_i(t, z, alpha, p, nu) over the control box.

    The minimizer never depends on ``nu``; ``nu`` is only used for the
    returned minimum value. ``method`` is ``"auto"`` (closed form when the
    spec declares a quadratic f0) or ``"pgd"`` (projected gradient).
    """
    c = _coupling(spec, t, i, z, p)
    if method == "auto" and spec.quadratic is not None:
        gamma, b = spec.quadratic(t, i, p)
        alpha = spec.clamp(-(np.asarray(b, dtype=float).reshape(-1) + c) / gamma)
        res = MinResult(alpha, None, True, 0)
    else:
        alpha, ok, it = _projected_gradient(spec, t, i, p, c)
        alpha = _corner_ties(spec, _reduced(spec, t, i, p, c), alpha)
        res = MinResult(alpha, None, ok, it)
        if not ok:
            warnings.warn(f"projected gradient hit the iteration cap at t={t}, state={i}",
                          RuntimeWarning, stacklevel=2)
    if with_value and (nu is not None or (spec.f2 is None and not spec.mean_field_in_q)):
        res.h_min = hamiltonian(spec, t, i, z, res.alpha, p, nu)
    return res


def minimized_hamiltonian(spec, t, i, z, p, nu=None) -> float:
    return minimize_hamiltonian(spec, t, i, z, p, nu).h_min


# --------------------------------------------------------------------------
# structural checks


def random_simplex(rng, m, size=None):
    return rng.dirichlet(np.ones(m), size=size)


def random_control(spec, rng):
    lo, hi = spec.box[:, 0], spec.box[:, 1]
    return lo + (hi - lo) * rng.random(spec.l)


def random_measure(spec, rng, k=None):
    k = k or int(rng.integers(1, spec.m + 2))
    atoms = np.array([random_control(spec, rng) for _ in range(k)])
    return DiscreteMeasure.merged(atoms, rng.dirichlet(np.ones(k)))


def validate_spec(spec: ProblemSpec, n_samples: int = 200, rng=0) -> list[str]:
    """Sampled checks of the rate bounds and the declared convexity of f0."""
    rng = np.random.default_rng(rng)
    problems = []
    C1, C2 = spec.rate_bounds
    for _ in range(n_samples):
        t = rng.uniform(0, spec.T)
        i = int(rng.integers(spec.m))
        a = random_control(spec, rng)
        p = random_simplex(rng, spec.m)
        nu = random_measure(spec, rng)
        row = spec.rate_row(t, i, a, p, nu)
        adm = spec.mask[i]
        bad = adm & ((row < C1) | (row > C2))
        if bad.any():
            problems.append(f"rate bounds: row {i} = {np.round(row, 6).tolist()} at t={t:.3g}, alpha={a}")
            break
    for _ in range(n_samples):
        t = rng.uniform(0, spec.T)
        i = int(rng.integers(spec.m))
        p = random_simplex(rng, spec.m)
        a, b = random_control(spec, rng), random_control(spec, rng)
        gap = spec.f0(t, i, b, p) - spec.f0(t, i, a, p) - spec.f0_gradient(t, i, a, p) @ (b - a)
        need = spec.gamma * float((b - a) @ (b - a))
        if gap < need - 1e-9:
            problems.append(f"convexity: secant gap {gap:.3g} < gamma*|da|^2 = {need:.3g}")
            break
    return problems


def lipschitz_probe(spec: ProblemSpec, n_samples: int = 200, rng=0) -> dict:
    """Largest observed difference quotients, one argument perturbed at a time."""
    rng = np.random.default_rng(rng)
    out = {"q": {"alpha": 0.0, "p": 0.0, "nu": 0.0},
           "f": {"alpha": 0.0, "p": 0.0, "nu": 0.0},
           "g": {"p": 0.0},
           "a_hat": {"z": 0.0, "p": 0.0}}

    def bump(group, key, num, den):
        if den > 1e-14:
            out[group][key] = max(out[group][key], abs(num) / den)

    for _ in range(n_samples):
        t = rng.uniform(0, spec.T)
        i = int(rng.integers(spec.m))
        a, a2 = random_control(spec, rng), random_control(spec, rng)
        p, p2 = random_simplex(rng, spec.m), random_simplex(rng, spec.m)
        nu, nu2 = random_measure(spec, rng), random_measure(spec, rng)
        dp = float(np.linalg.norm(p - p2))
        da = float(np.linalg.norm(a - a2))
        dnu = w1(nu, nu2)
        r = spec.rate_row(t, i, a, p, nu)
        for key, r2, den in (("alpha", spec.rate_row(t, i, a2, p, nu), da),
                             ("p", spec.rate_row(t, i, a, p2, nu), dp),
                             ("nu", spec.rate_row(t, i, a, p, nu2), dnu)):
            diff = np.where(spec.mask[i], r - r2, 0.0)
            bump("q", key, np.abs(diff).max(), den)
        c = spec.running_cost(t, i, a, p, nu)
        bump("f", "alpha", c - spec.running_cost(t, i, a2, p, nu), da)
        bump("f", "p", c - spec.running_cost(t, i, a, p2, nu), dp)
        bump("f", "nu", c - spec.running_cost(t, i, a, p, nu2), dnu)
        bump("g", "p", spec.g(i, p) - spec.g(i, p2), dp)
        z = rng.normal(size=spec.m)
        z2 = z + 0.1 * rng.normal(size=spec.m)
        ah = minimize_hamiltonian(spec, t, i, z, p).alpha
        bump("a_hat", "z", np.linalg.norm(ah - minimize_hamiltonian(spec, t, i, z2, p).alpha),
             np.sqrt(seminorm_sq(i, z - z2)))
        bump("a_hat", "p", np.linalg.norm(ah - minimize_hamiltonian(spec, t, i, z, p2).alpha), dp)
    return out


@dataclass
class MonotonicityReport:
    g_monotone: bool
    f1_monotone: bool
    witnesses: list
    min_g_sum: float
    min_f1_sum: float

    def as_dict(self):
        return {"g_monotone": self.g_monotone, "f1_monotone": self.f1_monotone,
                "min_g_sum": self.min_g_sum, "min_f1_sum": self.min_f1_sum,
                "witnesses": self.witnesses}


def check_monotonicity(spec: ProblemSpec, n_samples: int = 1000, rng=0) -> MonotonicityReport:
    """Sample the monotonicity sums for g and f1; negative values become witnesses."""
    if spec.mean_field_in_q or spec.f0_uses_p:
        raise StructuralError("monotonicity check needs q free of mean fields and f0 free of p")
    rng = np.random.default_rng(rng)
    witnesses = []
    min_g = min_f = np.inf
    for _ in range(n_samples):
        p, p2 = random_simplex(rng, spec.m), random_simplex(rng, spec.m)
        t = rng.uniform(0, spec.T)
        sg = sum((spec.g(i, p) - spec.g(i, p2)) * (p[i] - p2[i]) for i in range(spec.m))
        sf = sum((spec.f1(t, i, p) - spec.f1(t, i, p2)) * (p[i] - p2[i]) for i in range(spec.m))
        min_g, min_f = min(min_g, sg), min(min_f, sf)
        if sg < -1e-12 and len(witnesses) < 10:
            witnesses.append({"term": "g", "p": p.tolist(), "p_prime": p2.tolist(), "sum": float(sg)})
        if sf < -1e-12 and len(witnesses) < 10:
            witnesses.append({"term": "f1", "t": t, "p": p.tolist(), "p_prime": p2.tolist(), "sum": float(sf)})
    return MonotonicityReport(bool(min_g >= -1e-12), bool(min_f >= -1e-12), witnesses,
                              float(min_g), float(min_f))


# --------------------------------------------------------------------------
# parametric families


def _per_state(value, m, l=None):
    a = np.asarray(value, dtype=float)
    if l is None:
        return np.broadcast_to(a, (m,)).copy()
    if a.ndim == 0:
        return np.full((m, l), float(a))
    if a.ndim == 1 and a.size == m:
        return np.repeat(a[:, None], l, axis=1)
    return np.broadcast_to(a, (m, l)).copy()


def _pair_matrix(value, m, l=None):
    a = np.asarray(value, dtype=float)
    if l is None:
        return np.broadcast_to(a, (m, m)).copy()
    if a.ndim <= 2:
        a = np.broadcast_to(a, (m, m))[..., None] * np.ones(l)
    return np.broadcast_to(a, (m, m, l)).copy()


class ConfigError(ValueError):
    """Raised for configs that name an unknown family or malformed parameter."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def spec_from_config(cfg: dict) -> ProblemSpec:
    """Build a spec from the JSON form (schema in ``config.SCHEMA``)."""
    try:
        m = int(cfg["m"])
        T = float(cfg["T"])
    except KeyError as exc:
        raise ConfigError(exc.args[0], "missing required field") from None
    l = int(cfg.get("control_dim", 1))
    box = np.asarray(cfg.get("control_box", [[0.0, 1.0]] * l), dtype=float).reshape(l, 2)
    fam = cfg.get("family", {})
    mask = np.asarray(cfg["mask"], dtype=bool) if cfg.get("mask") is not None else None
    adm = ~np.eye(m, dtype=bool) if mask is None else mask & ~np.eye(m, dtype=bool)

    qc = fam.get("q", {"type": "linear", "base": 1.0, "slope": 0.0})
    if qc.get("type", "linear") != "linear":
        raise ConfigError("family.q.type", f"unknown rate family {qc.get('type')!r}")
    base = _pair_matrix(qc.get("base", 0.0), m)
    slope = _pair_matrix(qc.get("slope", 0.0), m, l)
    couple = _pair_matrix(qc.get("p_coupling", 0.0), m)
    mf_q = bool(np.any(couple[adm] != 0))

    def q0(t, i, p, nu, base=base, couple=couple):
        return base[i] + couple[i] * np.asarray(p)

    def q1(t, i, p, slope=slope):
        return slope[i]

    fc = fam.get("f0", {"type": "quadratic", "gamma": 1.0})
    ftype = fc.get("type", "quadratic")
    gam = float(fc.get("gamma", 1.0))
    if gam <= 0:
        raise ConfigError("family.f0.gamma", "must be positive")
    lin = _per_state(fc.get("linear", 0.0), m, l)
    quart = float(fc.get("quartic", 0.0))
    if ftype == "quadratic":
        def f0(t, i, a, p):
            a = np.asarray(a, dtype=float).reshape(-1)
            return 0.5 * gam * float(a @ a) + float(lin[i] @ a)

        def f0_grad(t, i, a, p):
            return gam * np.asarray(a, dtype=float).reshape(-1) + lin[i]

        def quadratic(t, i, p):
            return gam, lin[i]
    elif ftype == "quartic":
        if quart < 0:
            raise ConfigError("family.f0.quartic", "must be nonnegative")

        def f0(t, i, a, p):
            a = np.asarray(a, dtype=float).reshape(-1)
            return 0.5 * gam * float(a @ a) + float(lin[i] @ a) + 0.25 * quart * float(np.sum(a**4))

        def f0_grad(t, i, a, p):
            a = np.asarray(a, dtype=float).reshape(-1)
            return gam * a + lin[i] + quart * a**3

        quadratic = None
    else:
        raise ConfigError("family.f0.type", f"unknown running-cost family {ftype!r}")

    def congestion(sub, name):
        kind = sub.get("type", "congestion")
        if kind == "none":
            return np.zeros(m), 0.0
        if kind != "congestion":
            raise ConfigError(f"family.{name}.type", f"unknown family {kind!r}")
        return _per_state(sub.get("base", 0.0), m), float(sub.get("kappa", 0.0))

    f1_base, f1_k = congestion(fam.get("f1", {"type": "none"}), "f1")
    g_base, g_k = congestion(fam.get("g", {"type": "none"}), "g")

    def f1(t, i, p):
        return f1_base[i] + f1_k * np.asarray(p)[..., i]

    def g(i, p):
        return g_base[i] + g_k * np.asarray(p)[..., i]

    f2 = None
    f2c = fam.get("f2", {"type": "none"})
    if f2c.get("type", "none") == "control_mean":
        lam = float(f2c.get("lam", 0.0))

        def f2(t, p, nu):
            return lam * float(np.sum(nu.mean()))
    elif f2c.get("type", "none") != "none":
        raise ConfigError("family.f2.type", f"unknown family {f2c.get('type')!r}")

    slope_arr = np.where(adm[..., None], slope, 0.0)

    def rates_vec(t, alpha, p, nu):
        return base + couple * np.asarray(p)[None, :] + np.einsum("ijl,il->ij", slope, alpha)

    if ftype == "quadratic":
        def cost_vec(t, alpha, p):
            return (0.5 * gam * np.sum(alpha * alpha, axis=1) + np.sum(lin * alpha, axis=1)
                    + f1_base + f1_k * np.asarray(p))
    else:
        def cost_vec(t, alpha, p):
            return (0.5 * gam * np.sum(alpha * alpha, axis=1) + np.sum(lin * alpha, axis=1)
                    + 0.25 * quart * np.sum(alpha**4, axis=1) + f1_base + f1_k * np.asarray(p))

    argmin_vec = None
    if ftype == "quadratic":
        def argmin_vec(t, z, p):
            c = np.einsum("ij,ijl->il", z[None, :] - z[:, None], slope_arr)
            return np.clip(-(lin + c) / gam, box[:, 0], box[:, 1])

    rb = cfg.get("rate_bounds")
    if rb is None:
        raise ConfigError("rate_bounds", "missing required field")
    p_init = cfg.get("p_init")
    if p_init is None:
        raise ConfigError("p_init", "missing required field")
    return ProblemSpec(
        m=m, T=T, box=box, rate_bounds=tuple(rb), q0=q0, q1=q1, f0=f0, f0_grad=f0_grad,
        f1=f1, f2=f2, g=g, p_init=np.asarray(p_init, dtype=float),
        gamma=0.5 * gam, quadratic=quadratic, mask=mask, mean_field_in_q=mf_q,
        f0_uses_p=False, vectorized=True, rates_vec=rates_vec, cost_vec=cost_vec,
        argmin_vec=argmin_vec, name=cfg.get("name", "config"), config=dict(cfg),
    )


def quadratic_two_state_config(T: float = 1.0) -> dict:
    """Two states, rates equal to the control in [0.1, 2], f0 = alpha^2/2, g = (0, 1)."""
    return {
        "name": "quadratic2", "m": 2, "T": T, "control_dim": 1, "control_box": [[0.1, 2.0]],
        "rate_bounds": [0.05, 2.5], "mask": None,
        "family": {
            "q": {"type": "linear", "base": 0.0, "slope": 1.0},
            "f0": {"type": "quadratic", "gamma": 1.0, "linear": 0.0},
            "f1": {"type": "none"}, "f2": {"type": "none"},
            "g": {"type": "congestion", "base": [0.0, 1.0], "kappa": 0.0},
        },
        "p_init": [0.5, 0.5], "seed": 7,
    }


def monotone_congestion_config(kappa: float = 1.0, T: float = 1.0) -> dict:
    """Two states, f0 = alpha^2/2, rates = alpha, g = f1 = kappa * p_i."""
    return {
        "name": "monotone2", "m": 2, "T": T, "control_dim": 1, "control_box": [[0.1, 2.0]],
        "rate_bounds": [0.05, 2.5], "mask": None,
        "family": {
            "q": {"type": "linear", "base": 0.0, "slope": 1.0},
            "f0": {"type": "quadratic", "gamma": 1.0, "linear": 0.0},
            "f1": {"type": "congestion", "base": 0.0, "kappa": kappa},
            "f2": {"type": "none"},
            "g": {"type": "congestion", "base": 0.0, "kappa": kappa},
        },
        "p_init": [0.8, 0.2], "seed": 11,
    }
