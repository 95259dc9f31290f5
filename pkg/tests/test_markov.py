import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfgfinite import kernels
from mfgfinite.markov import (DimensionError, PathBatch, PathRecord, RateMatrix, RateTable,
                              SimplexFlow, StepSizeError, TimeGrid, build_reference_generator,
                              forward_flow, matexp_marginal, psi_matrix, psi_pinv_apply,
                              seminorm_sq, simulate_batch, simulate_path, validate_generator)


def test_reference_generator_examples():
    q3 = build_reference_generator(3).entries
    assert np.array_equal(np.diag(q3), [-2, -2, -2])
    assert np.all(q3[~np.eye(3, dtype=bool)] == 1)
    assert np.array_equal(build_reference_generator(2).entries, [[-1, 1], [1, -1]])
    mask = ~np.eye(3, dtype=bool)
    mask[0, 2] = False
    assert np.array_equal(build_reference_generator(3, mask).entries[0], [-1, 1, 0])


def test_reference_generator_rejects():
    with pytest.raises(DimensionError):
        build_reference_generator(1)
    mask = np.zeros((2, 2), bool)
    mask[1, 0] = True
    with pytest.raises(DimensionError):
        build_reference_generator(2, mask)
    q = build_reference_generator(2, mask, allow_absorbing=True).entries
    assert np.array_equal(q, [[0, 0], [1, -1]])


def test_validate_generator():
    assert validate_generator(build_reference_generator(3), 0.5, 2.0) == []
    bad = RateMatrix(np.array([[-1.0, 1.1], [1.0, -1.0]]), ~np.eye(2, dtype=bool))
    assert any(p.startswith("row-sum") for p in validate_generator(bad, 0.5, 2))
    neg = RateMatrix(np.array([[0.2, -0.2], [1.0, -1.0]]), ~np.eye(2, dtype=bool))
    assert any(p.startswith("sign") for p in validate_generator(neg, 0.1, 2))


def test_psi_examples():
    q3 = build_reference_generator(3)
    assert np.array_equal(psi_matrix(0, q3), [[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
    assert np.array_equal(psi_matrix(0, build_reference_generator(2)), [[1, -1], [-1, 1]])
    for i in range(3):
        assert np.allclose(psi_matrix(i, q3) @ np.ones(3), 0)


def test_seminorm_examples():
    assert seminorm_sq(0, [1, 2, 3]) == 5
    assert seminorm_sq(1, [0, 1, 0]) == 2
    assert seminorm_sq(2, [4, 4, 4]) == 0


def test_psi_pinv_examples():
    assert np.allclose(psi_pinv_apply(0, 1, 3), [-1 / 3, 2 / 3, -1 / 3])
    assert np.allclose(psi_pinv_apply(0, 1, 2), [-0.5, 0.5])
    for m in (2, 3, 5):
        q = build_reference_generator(m)
        for i in range(m):
            for j in range(m):
                if i != j:
                    e = np.eye(m)
                    assert np.allclose(psi_matrix(i, q) @ psi_pinv_apply(i, j, m), e[j] - e[i], atol=1e-12)


def test_seminorm_matches_quadratic_form(rng):
    for _ in range(100):
        m = int(rng.integers(2, 6))
        i = int(rng.integers(m))
        z = rng.normal(size=m)
        assert abs(seminorm_sq(i, z) - z @ psi_matrix(i, build_reference_generator(m)) @ z) <= 1e-12 * max(1, z @ z)


def test_pinv_on_range(rng):
    for _ in range(100):
        m = int(rng.integers(2, 6))
        i = int(rng.integers(m))
        q = rng.normal(size=m)
        q -= q.mean()
        pinv = np.linalg.pinv(psi_matrix(i, build_reference_generator(m)))
        assert np.allclose(psi_matrix(i, build_reference_generator(m)) @ pinv @ q, q, atol=1e-12)


def test_pathrecord_validation():
    with pytest.raises(ValueError):
        PathRecord(0, (0.5, 0.4), (1, 0), 1.0)
    with pytest.raises(ValueError):
        PathRecord(0, (0.5,), (0,), 1.0)
    with pytest.raises(ValueError):
        PathRecord(0, (1.0,), (1,), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.001, 0.999), max_size=8, unique=True), st.integers(0, 2))
def test_pathrecord_roundtrip(times, s0):
    times = sorted(times)
    states, s = [], s0
    for _ in times:
        s = (s + 1) % 3
        states.append(s)
    rec = PathRecord(s0, times, states, 1.0)
    assert PathRecord.from_csv(rec.to_csv()) == rec


def test_pathrecord_csv_layout():
    rec = PathRecord(0, (0.25,), (1,), 1.0)
    assert rec.to_csv() == "0,0\n0.25,1\n1,1\n"


def test_simulate_path_zero_horizon():
    rec = simulate_path(lambda t, i: np.ones(2), [0, 1], 0.0, 1, lam=1.0)
    assert rec.initial_state == 1 and rec.jump_times == ()


def test_simulate_path_two_state_marginal():
    Q = np.array([[-2.0, 2.0], [2.0, -2.0]])
    rng = np.random.default_rng(3)
    finals = [simulate_path(lambda t, i: Q[i], [1, 0], 1.0, rng, lam=2.0).state_at(1.0)
              for _ in range(20000)]
    frac = np.mean(np.array(finals) == 0)
    exact = 0.5 + 0.5 * np.exp(-4)
    assert abs(frac - exact) <= 3 * np.sqrt(exact * (1 - exact) / 20000)


def test_reference_jump_count(backend):
    grid = TimeGrid(2.0, 10)
    table = RateTable.constant(grid, build_reference_generator(3))
    b = simulate_batch(table, np.ones(3) / 3, 100000, 5)
    c = b.jump_counts()
    assert abs(c.mean() - 4.0) <= 3 * c.std(ddof=1) / np.sqrt(c.size)


def test_batch_marginal(backend):
    grid = TimeGrid(1.0, 10)
    table = RateTable.constant(grid, np.array([[0, 2.0], [2.0, 0]]))
    b = simulate_batch(table, [1, 0], 100000, 9)
    frac = np.mean(b.final_states() == 0)
    exact = 0.5 + 0.5 * np.exp(-4)
    assert abs(frac - exact) <= 3 * np.sqrt(exact * (1 - exact) / 1e5)


def test_backends_identical():
    if len(kernels.BACKENDS) < 2:
        pytest.skip("compiled extension not built")
    grid = TimeGrid(1.0, 50)
    R = np.stack([np.array([[0, 1 + t, 0.5], [2 - t, 0, 1], [0.3, t, 0]]) for t in grid.nodes])
    table = RateTable(grid, R)
    out = {}
    prev = kernels.BACKEND
    try:
        for name in kernels.BACKENDS:
            kernels.use_backend(name)
            b = simulate_batch(table, [0.2, 0.3, 0.5], 20000, 17)
            coef = np.random.default_rng(0).random((50, 3, 3))
            from mfgfinite.markov import integrate_along
            out[name] = (b.jump_times, b.jump_states, b.states_at(np.linspace(0, 1, 7)),
                         integrate_along(b, coef, grid))
    finally:
        kernels.use_backend(prev)
    a, c = out["compiled"], out["python"]
    for x, y in zip(a, c):
        assert np.array_equal(x, y)


def test_batch_deterministic_and_thread_independent():
    grid = TimeGrid(1.0, 10)
    table = RateTable.constant(grid, build_reference_generator(3))
    b1 = simulate_batch(table, np.ones(3) / 3, 20000, 4, threads=1)
    b2 = simulate_batch(table, np.ones(3) / 3, 20000, 4, threads=3)
    assert np.array_equal(b1.jump_times, b2.jump_times)
    assert np.array_equal(b1.offsets, b2.offsets)


def test_batch_records_roundtrip():
    grid = TimeGrid(1.0, 10)
    b = simulate_batch(RateTable.constant(grid, build_reference_generator(2)), [0.5, 0.5], 50, 1)
    b2 = PathBatch.from_records(b.records())
    assert np.array_equal(b.jump_times, b2.jump_times) and np.array_equal(b.init, b2.init)


def test_states_at_matches_records():
    grid = TimeGrid(1.0, 10)
    b = simulate_batch(RateTable.constant(grid, build_reference_generator(3)), np.ones(3) / 3, 200, 2)
    q = np.linspace(0, 1, 11)
    S = b.states_at(q)
    for p in range(0, 200, 17):
        rec = b.record(p)
        assert [rec.state_at(t) for t in q] == S[p].tolist()


def test_forward_flow_oracle():
    Q = np.array([[-1.0, 1.0], [1.0, -1.0]])
    flow = forward_flow(lambda t, i: Q[i], [1, 0], TimeGrid(1.0, 1000))
    assert abs(flow.points[-1, 0] - 0.56766764161830635) <= 1e-6
    assert np.abs(flow.points.sum(axis=1) - 1).max() <= 1e-10


def test_forward_flow_stationary():
    q = build_reference_generator(4).entries
    flow = forward_flow(lambda t, i: q[i], np.ones(4) / 4, TimeGrid(1.0, 100))
    assert np.abs(flow.points - 0.25).max() <= 1e-14


def test_forward_flow_step_too_large():
    q = 400.0 * build_reference_generator(2).entries
    with pytest.raises(StepSizeError):
        forward_flow(lambda t, i: q[i], [1, 0], TimeGrid(1.0, 10))


def test_matexp_examples():
    Q = np.array([[-1.0, 1.0], [1.0, -1.0]])
    assert np.array_equal(matexp_marginal(Q, [0.3, 0.7], 0.0), [0.3, 0.7])
    assert np.allclose(matexp_marginal(Q, [1, 0], 1.0), [0.56766764, 0.43233236], atol=1e-8)
    assert np.allclose(matexp_marginal(build_reference_generator(3), [1, 0, 0], 50.0), 1 / 3)


def test_simplexflow_interpolates():
    grid = TimeGrid(1.0, 2)
    f = SimplexFlow(grid, [[1, 0], [0.5, 0.5], [0, 1]])
    assert np.allclose(f.at(0.25), [0.75, 0.25])
