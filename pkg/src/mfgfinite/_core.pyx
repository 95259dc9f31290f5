# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Monte Carlo kernels.

Every routine here has a numpy twin in :mod:`mfgfinite._pycore` with the same
signature and the same floating point operation order, so both backends give
the same answers on the same random inputs.

Rate tables ``R`` have shape ``(K + 1, m, m)``: off-diagonal rates at the grid
nodes, linearly interpolated in time between nodes. Diagonals are ignored.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, floor

cnp.import_array()


cdef inline Py_ssize_t _interval(double s, Py_ssize_t n_int) noexcept nogil:
    cdef Py_ssize_t k = <Py_ssize_t> floor(s)
    if k < 0:
        k = 0
    if k > n_int - 1:
        k = n_int - 1
    return k


cdef inline double _rate(const double[:, :, ::1] R, double dt, double t,
                         Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef Py_ssize_t n_int = R.shape[0] - 1
    cdef double s = t / dt
    cdef Py_ssize_t k = _interval(s, n_int)
    cdef double w = s - k
    return (1.0 - w) * R[k, i, j] + w * R[k + 1, i, j]


def thin_events(const cnp.int64_t[::1] offsets, const double[::1] times,
                const double[::1] u, const cnp.int64_t[::1] init,
                const double[:, :, ::1] R, double dt, double lam):
    """Accept/reject candidate clock events; returns (new_state_or_-1, status, bad_event)."""
    cdef Py_ssize_t n = init.shape[0]
    cdef Py_ssize_t m = R.shape[1]
    cdef Py_ssize_t p, e, j, state
    cdef double t, x, r, total, acc
    cdef int status = 0
    cdef Py_ssize_t bad = -1
    out_arr = np.full(times.shape[0], -1, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    with nogil:
        for p in range(n):
            state = init[p]
            for e in range(offsets[p], offsets[p + 1]):
                t = times[e]
                total = 0.0
                for j in range(m):
                    if j == state:
                        continue
                    r = _rate(R, dt, t, state, j)
                    if r < 0.0:
                        status = 1
                    total = total + r
                if total > lam * (1.0 + 1e-12):
                    status = 2
                if status != 0:
                    bad = e
                    break
                x = u[e] * lam
                if x < total:
                    acc = 0.0
                    for j in range(m):
                        if j == state:
                            continue
                        acc = acc + _rate(R, dt, t, state, j)
                        if x < acc:
                            break
                    if j >= m:
                        j = m - 1
                    state = j
                    out[e] = j
            if status != 0:
                break
    return out_arr, status, bad


def states_at(const cnp.int64_t[::1] offsets, const double[::1] jtimes,
              const cnp.int64_t[::1] jstates, const cnp.int64_t[::1] init,
              const double[::1] query):
    """State of each path at each (sorted) query time, right-continuous."""
    cdef Py_ssize_t n = init.shape[0]
    cdef Py_ssize_t nq = query.shape[0]
    cdef Py_ssize_t p, q, e, end
    cdef cnp.int64_t state
    out_arr = np.empty((n, nq), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    with nogil:
        for p in range(n):
            state = init[p]
            e = offsets[p]
            end = offsets[p + 1]
            for q in range(nq):
                while e < end and jtimes[e] <= query[q]:
                    state = jstates[e]
                    e = e + 1
                out[p, q] = state
    return out_arr


cdef inline double _cum(const double[:, ::1] cum, const double[:, :, ::1] coef,
                        double dt, double t, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t n_int = coef.shape[0]
    cdef double s = t / dt
    cdef Py_ssize_t k = _interval(s, n_int)
    cdef double w = s - k
    cdef double w2 = w * w
    cdef double w3 = w2 * w
    return cum[k, i] + dt * (coef[k, i, 0] * (w - 1.5 * w2 + (2.0 / 3.0) * w3)
                             + coef[k, i, 1] * (2.0 * w2 - (4.0 / 3.0) * w3)
                             + coef[k, i, 2] * (-0.5 * w2 + (2.0 / 3.0) * w3))


def integrate_paths(const cnp.int64_t[::1] offsets, const double[::1] jtimes,
                    const cnp.int64_t[::1] jstates, const cnp.int64_t[::1] init,
                    double T, const double[:, ::1] cum,
                    const double[:, :, ::1] coef, double dt):
    """Integral over [0, T] of a per-state integrand along each path."""
    cdef Py_ssize_t n = init.shape[0]
    cdef Py_ssize_t p, e
    cdef Py_ssize_t state
    cdef double a, total
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for p in range(n):
            state = init[p]
            a = 0.0
            total = 0.0
            for e in range(offsets[p], offsets[p + 1]):
                total = total + (_cum(cum, coef, dt, jtimes[e], state) - _cum(cum, coef, dt, a, state))
                a = jtimes[e]
                state = jstates[e]
            total = total + (_cum(cum, coef, dt, T, state) - _cum(cum, coef, dt, a, state))
            out[p] = total
    return out_arr


def jump_log_rates(const cnp.int64_t[::1] offsets, const double[::1] jtimes,
                   const cnp.int64_t[::1] jstates, const cnp.int64_t[::1] init,
                   const double[:, :, ::1] R, double dt):
    """Sum over jumps of log(rate of the transition taken at the jump time)."""
    cdef Py_ssize_t n = init.shape[0]
    cdef Py_ssize_t p, e, state
    cdef double total
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for p in range(n):
            state = init[p]
            total = 0.0
            for e in range(offsets[p], offsets[p + 1]):
                total = total + log(_rate(R, dt, jtimes[e], state, jstates[e]))
                state = jstates[e]
            out[p] = total
    return out_arr
