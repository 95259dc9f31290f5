"""Pure numpy versions of the kernels in ``_core.pyx``.

Vectorized across paths instead of looping per path. The arithmetic follows
the compiled kernels term by term so the two backends agree on identical
random inputs.
"""
import numpy as np


def _interval(s, n_int):
    k = np.floor(s).astype(np.int64)
    return np.clip(k, 0, n_int - 1)


def _rate_rows(R, dt, t, state):
    """Interpolated rate rows R(t)[state, :] for arrays of times and states."""
    s = t / dt
    k = _interval(s, R.shape[0] - 1)
    w = (s - k)[:, None]
    return (1.0 - w) * R[k, state, :] + w * R[k + 1, state, :]


def thin_events(offsets, times, u, init, R, dt, lam):
    n = init.shape[0]
    m = R.shape[1]
    out = np.full(times.shape[0], -1, dtype=np.int64)
    counts = np.diff(offsets)
    state = init.astype(np.int64).copy()
    max_count = int(counts.max()) if n else 0
    cols = np.arange(m)
    for r in range(max_count):
        active = np.nonzero(counts > r)[0]
        e = offsets[active] + r
        s = state[active]
        rows = _rate_rows(R, dt, times[e], s)
        rows[cols[None, :] == s[:, None]] = 0.0
        cum = np.cumsum(rows, axis=1)
        total = cum[:, -1]
        neg = (rows < 0.0).any(axis=1)
        big = total > lam * (1.0 + 1e-12)
        bad = neg | big
        if bad.any():
            first = int(np.argmax(bad))
            # report the earliest offending event in path order, as the compiled loop would
            status = 1 if neg[first] else 2
            return out, status, int(e[first])
        x = u[e] * lam
        jump = x < total
        target = np.argmax(cum > x[:, None], axis=1)
        s_new = np.where(jump, target, s)
        out[e[jump]] = s_new[jump]
        state[active] = s_new
    return out, 0, -1


def states_at(offsets, jtimes, jstates, init, query):
    n = init.shape[0]
    nq = query.shape[0]
    counts = np.diff(offsets)
    path_j = np.repeat(np.arange(n), counts)
    path_q = np.repeat(np.arange(n), nq)
    t_q = np.tile(query, n)
    # sort jumps before queries at equal times (right-continuity)
    path_all = np.concatenate([path_j, path_q])
    t_all = np.concatenate([jtimes, t_q])
    kind = np.concatenate([np.zeros(path_j.size, np.int64), np.ones(path_q.size, np.int64)])
    order = np.lexsort((kind, t_all, path_all))
    is_jump = kind[order] == 0
    jumps_before = np.cumsum(is_jump) - is_jump
    q_pos = np.nonzero(~is_jump)[0]
    q_idx = order[q_pos] - path_j.size
    n_before = jumps_before[q_pos] - offsets[path_q[q_idx]]
    last = offsets[path_q[q_idx]] + n_before - 1
    st = np.where(n_before > 0, jstates[np.maximum(last, 0)] if jstates.size else 0, init[path_q[q_idx]])
    out = np.empty(n * nq, dtype=np.int64)
    out[q_idx] = st
    return out.reshape(n, nq)


def _cum(cum, coef, dt, t, i):
    s = t / dt
    k = _interval(s, coef.shape[0])
    w = s - k
    w2 = w * w
    w3 = w2 * w
    return cum[k, i] + dt * (coef[k, i, 0] * (w - 1.5 * w2 + (2.0 / 3.0) * w3)
                             + coef[k, i, 1] * (2.0 * w2 - (4.0 / 3.0) * w3)
                             + coef[k, i, 2] * (-0.5 * w2 + (2.0 / 3.0) * w3))


def _segments(offsets, jtimes, jstates, init, T):
    n = init.shape[0]
    counts = np.diff(offsets)
    n_seg = counts + 1
    seg_off = np.concatenate([[0], np.cumsum(n_seg)])
    total = int(seg_off[-1])
    start = np.zeros(total)
    end = np.full(total, float(T))
    state = np.empty(total, dtype=np.int64)
    first = seg_off[:-1]
    state[first] = init
    # jump e of path p closes segment (seg_off[p] + rank) and opens the next one
    path_j = np.repeat(np.arange(n), counts)
    rank = np.arange(jtimes.size) - offsets[path_j]
    close = seg_off[path_j] + rank
    end[close] = jtimes
    start[close + 1] = jtimes
    state[close + 1] = jstates
    path_s = np.repeat(np.arange(n), n_seg)
    return start, end, state, path_s, seg_off


def integrate_paths(offsets, jtimes, jstates, init, T, cum, coef, dt):
    n = init.shape[0]
    start, end, state, path_s, seg_off = _segments(offsets, jtimes, jstates, init, T)
    seg = _cum(cum, coef, dt, end, state) - _cum(cum, coef, dt, start, state)
    # sequential per-path accumulation keeps the summation order of the compiled loop
    out = np.zeros(n)
    n_seg = np.diff(seg_off)
    for r in range(int(n_seg.max()) if n else 0):
        active = np.nonzero(n_seg > r)[0]
        out[active] = out[active] + seg[seg_off[active] + r]
    return out


def jump_log_rates(offsets, jtimes, jstates, init, R, dt):
    n = init.shape[0]
    counts = np.diff(offsets)
    path_j = np.repeat(np.arange(n), counts)
    prev = np.empty(jstates.size, dtype=np.int64)
    if jstates.size:
        prev[:] = np.concatenate([[0], jstates[:-1]])
        first = offsets[:-1][counts > 0]
        prev[first] = init[counts > 0]
    s = jtimes / dt
    k = _interval(s, R.shape[0] - 1)
    w = s - k
    r = (1.0 - w) * R[k, prev, jstates] + w * R[k + 1, prev, jstates]
    terms = np.log(r)
    out = np.zeros(n)
    for rr in range(int(counts.max()) if n else 0):
        active = np.nonzero(counts > rr)[0]
        out[active] = out[active] + terms[offsets[active] + rr]
    return out
