"""Acceptance checks, one per criterion.

Each check returns (passed, detail). Under pytest every check prints a
``PASS``/``FAIL`` line with its runtime and asserts both the outcome and the
time limit. ``python3 tests/test_acceptance.py`` runs them all standalone.
"""
import json
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from mfgfinite import cli, hjb, model  # noqa: E402
from mfgfinite.equilibrium import (best_response_gap, candidate_policies, consistency_residual,  # noqa: E402
                                   two_start_agreement, picard_solve)
from mfgfinite.girsanov import measure_consistency  # noqa: E402
from mfgfinite.markov import (TimeGrid, build_reference_generator, forward_flow,  # noqa: E402
                              matexp_marginal)
from mfgfinite.model import hjb_driver, minimize_hamiltonian, minimized_hamiltonian, spec_from_config  # noqa: E402
from mfgfinite.nplayer import (brute_force_joint_generator, chaos_error, deviation_gain,  # noqa: E402
                               deviation_grid, kron_generator, kron_psi_identity)

ROOT = Path(__file__).resolve().parents[1]
SEED = 20240611

_cache = {}


def _mono():
    if "mono" not in _cache:
        spec = spec_from_config(model.monotone_congestion_config())
        _cache["mono"] = (spec, picard_solve(spec))
    return _cache["mono"]


def _random_generator(rng, m):
    Q = rng.uniform(0.1, 3.0, (m, m))
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def check_1():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(5):
        m = int(rng.integers(2, 5))
        Q = _random_generator(rng, m)
        p0 = rng.dirichlet(np.ones(m))
        grid = TimeGrid(1.0, 1000)
        flow = forward_flow(Q, p0, grid).points
        exact = np.stack([matexp_marginal(Q, p0, t) for t in grid.nodes])
        worst = max(worst, float(np.abs(flow - exact).max()))
    return worst <= 1e-6, f"sup error {worst:.2e}"


def check_2():
    Q0 = build_reference_generator(2)
    rep = measure_consistency(np.array([[-2.0, 2.0], [2.0, -2.0]]), Q0, [1.0, 0.0], 1.0, 100000, SEED)
    c = rep.checks()
    ok = c["reweighted_vs_direct"] and c["reweighted_vs_exact"] and c["weight_mean_one"]
    return ok, (f"reweighted {rep.reweighted[0]:.5f} direct {rep.direct[0]:.5f} "
                f"exact {rep.exact[0]:.5f}; E[W] {rep.mean_weight:.4f}+-{rep.mean_weight_se:.4f}")


def check_3():
    spec = spec_from_config(model.quadratic_two_state_config())
    grid = hjb.default_grid(spec.T)
    p, nu = hjb.default_flows(spec, grid)
    V, pol = hjb.solve_value(spec, p, nu)
    err = float(np.abs(hjb.evaluate_policy_cost(spec, pol, p, nu) - V.V[0]).max())
    rng = np.random.default_rng(SEED)
    from mfgfinite.equilibrium import _random_policy
    margin = min(float((hjb.evaluate_policy_cost(spec, _random_policy(spec, grid, rng), p, nu)
                        - V.V[0]).min()) for _ in range(50))
    return err <= 1e-8 and margin >= -1e-10, f"|J - V| {err:.1e}; min margin over 50 {margin:.3e}"


def check_4():
    spec = spec_from_config(model.quadratic_two_state_config())
    grid = hjb.default_grid(spec.T)
    p, nu = hjb.default_flows(spec, grid)
    V, pol = hjb.solve_value(spec, p, nu)
    r = hjb.martingale_residual(spec, V, pol, p, nu, 100000, SEED)
    bad = hjb.martingale_residual(spec, hjb.ValueSurface(grid, 2.0 * V.V), pol, p, nu, 100000, SEED)
    ok = abs(r["mean"]) <= 3 * r["se"] and abs(bad["mean"]) > 3 * bad["se"]
    return ok, (f"residual {r['mean']:.2e} (se {r['se']:.1e}); "
                f"corrupted {bad['mean']:.2e} (se {bad['se']:.1e})")


def check_5():
    spec, sol = _mono()
    s, c = consistency_residual(spec, sol)
    n_sys = len(candidate_policies(spec, sol, 0, SEED))
    gap = best_response_gap(spec, sol, max(0, 50 - n_sys), SEED)
    diff, _, s2 = two_start_agreement(spec, first=sol)
    ok = (sol.converged and s2.converged and s < 1e-6 and c < 1e-6
          and gap.gap <= 1e-9 and gap.n_candidates >= 50 and diff <= 1e-5)
    return ok, (f"{len(sol.trace)} iterations, residuals ({s:.1e}, {c:.1e}); "
                f"gap {gap.gap:.1e} over {gap.n_candidates}; two-start diff {diff:.1e}")


def check_6():
    spec, sol = _mono()
    rep = chaos_error(spec, sol, [8, 16, 32, 64, 128, 256, 512], 64, SEED)
    ok = bool(np.all(rep.bound_ok)) and -1.25 <= rep.slope_state <= -0.75 and rep.slope_w1 <= -0.4
    return ok, (f"bound held at {int(rep.bound_ok.sum())}/{rep.bound_ok.size} N; "
                f"state slope {rep.slope_state:.3f}; W1^2 slope {rep.slope_w1:.3f}")


def check_7():
    spec, sol = _mono()
    devs = deviation_grid(spec, sol, 25)
    names, pols = [d[0] for d in devs], [d[1] for d in devs]
    reps = [deviation_gain(spec, sol, N, pols, 400, SEED + N, names=names) for N in (16, 256)]
    a = names.index("a_hat")
    ahat_ok = all(abs(r.gain[a]) <= 3 * r.se[a] for r in reps)
    ok = reps[1].max_profit <= reps[0].max_profit and ahat_ok
    return ok, (f"max profit N=16 {reps[0].max_profit:.2e}, N=256 {reps[1].max_profit:.2e}; "
                f"a_hat gain {reps[0].gain[a]:.1e}")


def check_8():
    rng = np.random.default_rng(SEED)
    exact = True
    for m1 in (2, 3, 4):
        for m2 in (2, 3, 4):
            Qs = [build_reference_generator(m1), build_reference_generator(m2)]
            exact &= bool(np.array_equal(kron_generator(Qs).entries, brute_force_joint_generator(Qs)))
    Qs = [build_reference_generator(2)] * 4
    exact &= bool(np.array_equal(kron_generator(Qs).entries, brute_force_joint_generator(Qs)))
    held = 0
    for _ in range(100):
        m1, m2 = (int(x) for x in rng.integers(2, 5, 2))
        st = (int(rng.integers(m1)), int(rng.integers(m2)))
        held += kron_psi_identity(st, rng.normal(size=m1 * m2), dims=(m1, m2), tol=1e-12)
    return exact and held == 100, f"kron exact {exact}; psi identity {held}/100"


def check_9():
    rng = np.random.default_rng(SEED)
    worst_a = 0.0
    for _ in range(200):
        m, l = int(rng.integers(2, 4)), int(rng.integers(1, 3))
        cfg = model.quadratic_two_state_config()
        cfg.update(m=m, p_init=(np.ones(m) / m).tolist(), control_dim=l,
                   control_box=[[0.1, float(rng.uniform(0.5, 3))] for _ in range(l)],
                   rate_bounds=[0.0, 50.0])
        cfg["family"]["q"] = {"type": "linear", "base": 0.1, "slope": rng.uniform(0, 1, (m, m, l)).tolist()}
        cfg["family"]["f0"] = {"type": "quadratic", "gamma": float(rng.uniform(0.5, 3)),
                               "linear": rng.normal(size=(m, l)).tolist()}
        cfg["family"]["g"] = {"type": "congestion", "base": 0.0, "kappa": 1.0}
        spec = spec_from_config(cfg)
        z, i = rng.normal(scale=3, size=m), int(rng.integers(m))
        a1 = minimize_hamiltonian(spec, 0.0, i, z, spec.p_init).alpha
        a2 = minimize_hamiltonian(spec, 0.0, i, z, spec.p_init, method="pgd").alpha
        worst_a = max(worst_a, float(np.abs(a1 - a2).max()))
    spec = spec_from_config(model.quadratic_two_state_config())
    q0 = spec.reference.entries
    worst_d = 0.0
    for _ in range(200):
        z, i, t = rng.normal(size=2), int(rng.integers(2)), float(rng.uniform())
        p = rng.dirichlet([1, 1])
        h = minimized_hamiltonian(spec, t, i, z, p)
        a = minimize_hamiltonian(spec, t, i, z, p).alpha
        lhs = h + sum(q0[i, j] * (z[j] - z[i]) for j in range(2) if j != i)
        worst_d = max(worst_d, abs(lhs - hjb_driver(spec, t, i, z, a, p)))
    return worst_a <= 1e-8 and worst_d <= 1e-12, f"minimizer gap {worst_a:.1e}; driver gap {worst_d:.1e}"


def check_10():
    cfg = model.monotone_congestion_config()
    cfg.update(grid={"n_steps": 200}, mc={"n_paths": 2000, "n_write": 5},
               nplayer={"N_list": [8, 16], "reps": 8, "N_deviation": [4, 8], "n_deviations": 3, "n_mc": 10},
               likelihood={"rates": [[0, 2], [2, 0]], "p0": [1, 0], "t": 1.0, "n_steps": 100})
    same = True
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "cfg.json"
        path.write_text(json.dumps(cfg))
        for cmd in ("solve", "simulate", "evaluate-cost", "nplayer", "check-monotone", "likelihood-check"):
            dirs = [Path(tmp) / f"{cmd}-{k}" for k in (0, 1)]
            for d in dirs:
                cli.run([cmd, "--config", str(path), "--out", str(d)])
            a = {f.name: f.read_bytes() for f in sorted(dirs[0].iterdir())}
            b = {f.name: f.read_bytes() for f in sorted(dirs[1].iterdir())}
            same &= a == b and len(a) > 1
    return same, "six commands rerun byte-identical" if same else "outputs differ between reruns"


CRITERIA = [
    (1, "forward flow vs matrix exponential", check_1, 1),
    (2, "change-of-measure consistency", check_2, 30),
    (3, "optimality and comparison", check_3, 10),
    (4, "martingale residual", check_4, 60),
    (5, "equilibrium certification", check_5, 60),
    (6, "propagation of chaos", check_6, 600),
    (7, "epsilon-Nash trend", check_7, 600),
    (8, "Kronecker identities", check_8, 5),
    (9, "Hamiltonian correctness", check_9, 5),
    (10, "determinism", check_10, None),
]


def _run(idx, name, fn, limit):
    t0 = time.perf_counter()
    ok, detail = fn()
    dt = time.perf_counter() - t0
    in_time = limit is None or dt < limit
    status = "PASS" if ok and in_time else "FAIL"
    lim = f"limit {limit}s" if limit else "no limit"
    line = f"{status} criterion {idx} ({name}): {detail} [{dt:.1f}s, {lim}]"
    return ok, in_time, line


@pytest.mark.parametrize("idx,name,fn,limit", CRITERIA, ids=[f"c{c[0]}" for c in CRITERIA])
def test_criterion(idx, name, fn, limit, capsys):
    if idx == 5:
        _cache.pop("mono", None)  # time the equilibrium solve itself
    elif idx in (6, 7):
        _mono()
    ok, in_time, line = _run(idx, name, fn, limit)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line
    assert in_time, line


if __name__ == "__main__":
    failed = 0
    for c in CRITERIA:
        if c[0] == 5:
            _cache.pop("mono", None)
        ok, in_time, line = _run(*c)
        print(line, flush=True)
        failed += not (ok and in_time)
    sys.exit(1 if failed else 0)
