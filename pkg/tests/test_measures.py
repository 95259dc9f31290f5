import numpy as np
import pytest

from mfgfinite.measures import (ControlFlow, DiscreteMeasure, UnsupportedMeasure,
                                empirical_controls, empirical_states, mixture,
                                pushforward_policy, w1, w1_lp)
from mfgfinite.markov import TimeGrid


def D(*pairs):
    return DiscreteMeasure([a for a, _ in pairs], [w for _, w in pairs])


def test_w1_examples():
    assert w1(D((0.0, 1.0)), D((1.0, 1.0))) == 1.0
    assert w1(D((0.0, 0.5), (1.0, 0.5)), D((0.0, 1.0))) == 0.5
    mu = D((0.2, 0.3), (0.9, 0.7))
    assert w1(mu, mu) == 0.0


def test_empirical_examples():
    assert np.allclose(empirical_states([0, 0, 1, 2], 3), [0.5, 0.25, 0.25])
    assert np.array_equal(empirical_states([1, 1, 1], 3), [0, 1, 0])
    assert np.array_equal(empirical_states([0], 3), [1, 0, 0])
    m = empirical_controls([1.0, 1.0, 2.0])
    assert np.allclose(m.atoms[:, 0], [1, 2]) and np.allclose(m.weights, [2 / 3, 1 / 3])
    assert empirical_controls([0.7] * 5).weights.tolist() == [1.0]


def test_pushforward_examples():
    m = pushforward_policy([1.0, 2.0], [0.3, 0.7])
    assert np.allclose(m.atoms[:, 0], [1, 2]) and np.allclose(m.weights, [0.3, 0.7])
    assert pushforward_policy([1.5, 1.5], [0.3, 0.7]).weights.tolist() == [1.0]
    m = pushforward_policy([1.0, 2.0], [1.0, 0.0])
    assert w1(m, D((1.0, 1.0))) == 0.0


def test_w1_metric_axioms(rng):
    def rand():
        k = int(rng.integers(1, 5))
        return DiscreteMeasure(rng.uniform(0, 2, k), rng.dirichlet(np.ones(k)))

    for _ in range(200):
        a, b, c = rand(), rand(), rand()
        assert w1(a, b) == w1(b, a)
        assert w1(a, c) <= w1(a, b) + w1(b, c) + 1e-10


def test_w1_line_matches_lp(rng):
    for _ in range(100):
        k, n = rng.integers(1, 6, size=2)
        a = DiscreteMeasure(rng.uniform(0, 2, k), rng.dirichlet(np.ones(k)))
        b = DiscreteMeasure(rng.uniform(0, 2, n), rng.dirichlet(np.ones(n)))
        assert abs(w1(a, b) - w1_lp(a, b)) <= 1e-10


def test_w1_higher_dim(rng):
    a = DiscreteMeasure([[0, 0], [1, 1]], [0.5, 0.5])
    b = DiscreteMeasure([[0, 0]], [1.0])
    assert abs(w1(a, b) - 0.5 * np.sqrt(2)) <= 1e-12
    big = DiscreteMeasure(rng.random((100, 2)), np.full(100, 0.01))
    with pytest.raises(UnsupportedMeasure):
        w1(big, b)


def test_pushforward_w1_monotone_in_p():
    a = [0.5, 1.5]
    base = pushforward_policy(a, [0.5, 0.5])
    ds = [w1(base, pushforward_policy(a, [0.5 + e, 0.5 - e])) for e in (0.0, 0.1, 0.2, 0.3)]
    assert ds == sorted(ds) and ds[0] == 0.0
    assert ds[-1] <= 1.0 * 0.6 / 2 + 1e-12


def test_merge_and_mixture():
    m = DiscreteMeasure.merged([1.0, 1.0 + 1e-13, 2.0], [0.2, 0.3, 0.5])
    assert m.atoms.shape[0] == 2 and np.allclose(m.weights, [0.5, 0.5])
    mix = mixture(D((0.0, 1.0)), D((1.0, 1.0)), 0.25)
    assert np.allclose(mix.weights, [0.75, 0.25])
    assert mixture(D((0.0, 1.0)), D((1.0, 1.0)), 1.0).atoms.tolist() == [[1.0]]


def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure([0.0, 1.0], [0.6, 0.6])
    with pytest.raises(ValueError):
        DiscreteMeasure([0.0], [-1.0])


def test_measure_csv_roundtrip():
    m = D((0.1, 0.25), (0.7, 0.75))
    m2 = DiscreteMeasure.from_csv(m.to_csv())
    assert np.array_equal(m.atoms, m2.atoms) and np.array_equal(m.weights, m2.weights)


def test_control_flow_left_constant():
    grid = TimeGrid(1.0, 2)
    f = ControlFlow(grid, (D((0.0, 1.0)), D((1.0, 1.0)), D((2.0, 1.0))))
    assert f.at(0.49).atoms[0, 0] == 0.0 and f.at(0.5).atoms[0, 0] == 1.0
    assert f.at(1.0).atoms[0, 0] == 1.0
