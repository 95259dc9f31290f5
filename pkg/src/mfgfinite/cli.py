"""Command-line driver: ``mfgfinite <command> --config FILE [--seed N] [--out DIR]``.

Exit codes: 0 success, 1 invalid config or structural mismatch,
2 the fixed-point solver did not converge (outputs are still written).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import config_hash, load_config
from .equilibrium import (best_response_gap, consistency_residual, picard_solve,
                          two_start_agreement)
from .girsanov import importance_cost, measure_consistency
from .hjb import (PolicySurface, controlled_rate_table, default_flows, default_grid,
                  evaluate_policy_cost, solve_value, total_cost)
from .markov import RateMatrix, as_seed_sequence, simulate_batch
from .model import ConfigError, StructuralError, check_monotonicity, spec_from_config, validate_spec
from .nplayer import chaos_error, deviation_gain, deviation_grid

COMMANDS = ("solve", "simulate", "evaluate-cost", "verify-equilibrium", "nplayer",
            "check-monotone", "likelihood-check")


class NotConverged(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


class RunDir:
    """Output directory that remembers what it wrote, for the manifest."""

    def __init__(self, path: Path):
        self.path = path
        self.path.mkdir(parents=True, exist_ok=True)
        self.files = []

    def csv(self, name, header, rows):
        with open(self.path / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        self.files.append(name)

    def json(self, name, obj):
        with open(self.path / name, "w") as fh:
            json.dump(_plain(obj), fh, sort_keys=True, indent=2)
            fh.write("\n")
        self.files.append(name)

    def text(self, name, body):
        (self.path / name).write_text(body)
        self.files.append(name)

    def manifest(self, command, cfg, seed):
        digests = {}
        for name in sorted(set(self.files)):
            digests[name] = hashlib.sha256((self.path / name).read_bytes()).hexdigest()
        import scipy

        self.json("manifest.json", {
            "command": command, "config_sha256": config_hash(cfg), "seed": seed,
            "versions": {"mfgfinite": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
            "backend": kernels.BACKEND, "outputs": digests,
        })


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


# --------------------------------------------------------------------------
# pipelines


def _grid(spec, cfg):
    return default_grid(spec.T, cfg["grid"].get("n_steps"))


def _solve(spec, cfg, out: RunDir | None = None):
    s = cfg["solver"]
    sol = picard_solve(spec, theta=s["damping"], tol=s["tol"], max_iter=s["max_iter"],
                       grid=_grid(spec, cfg))
    if out is not None:
        _write_solution(spec, sol, out)
    return sol


def _write_solution(spec, sol, out: RunDir):
    m, l = spec.m, spec.l
    a_cols = [f"alpha_{i + 1}" if l == 1 else f"alpha_{i + 1}_{d + 1}" for i in range(m) for d in range(l)]
    nodes = sol.grid.nodes
    out.csv("equilibrium.csv", ["t"] + [f"p_{i + 1}" for i in range(m)] + a_cols,
            ([t, *sol.p_flow.points[k], *sol.policy.a[k].ravel()] for k, t in enumerate(nodes)))
    out.csv("value.csv", ["t"] + [f"V_{i + 1}" for i in range(m)],
            ([t, *sol.V.V[k]] for k, t in enumerate(nodes)))
    out.csv("trace.csv", ["iter", "state_res", "control_res"],
            ([r["iter"], r["state_res"], r["control_res"]] for r in sol.trace))


def cmd_solve(spec, cfg, seed, out, threads):
    sol = _solve(spec, cfg, out)
    out.json("solve.json", {"converged": sol.converged, "iterations": len(sol.trace),
                            "residual": sol.residual, "tol": cfg["solver"]["tol"],
                            "total_cost": total_cost(spec, sol.V.V[0])})
    if not sol.converged:
        raise NotConverged
    return sol


def cmd_simulate(spec, cfg, seed, out, threads):
    sol = _solve(spec, cfg, out)
    table = controlled_rate_table(spec, sol.policy, sol.p_flow, sol.nu_flow)
    n = cfg["mc"]["n_paths"]
    batch = simulate_batch(table, spec.p_init, n, seed, lam=spec.majorant, threads=threads)
    rows = []
    for pid in range(min(cfg["mc"]["n_write"], n)):
        for line in batch.record(pid).to_csv().splitlines():
            rows.append([pid] + line.split(","))
    out.csv("paths.csv", ["path", "t", "state"], rows)
    nodes = sol.grid.nodes
    st = batch.states_at(nodes)
    freq = np.stack([np.bincount(st[:, k], minlength=spec.m) for k in range(nodes.size)]) / n
    out.csv("marginals.csv", ["t"] + [f"freq_{i + 1}" for i in range(spec.m)]
            + [f"p_{i + 1}" for i in range(spec.m)],
            ([t, *freq[k], *sol.p_flow.points[k]] for k, t in enumerate(nodes)))
    out.json("simulate.json", {"n_paths": n, "seed": seed, "converged": sol.converged,
                               "max_abs_marginal_error": float(np.abs(freq - sol.p_flow.points).max())})
    if not sol.converged:
        raise NotConverged


def _policy_from_cfg(spec, cfg, sol):
    pc = cfg["policy"]
    if pc["type"] == "constant":
        val = np.asarray(pc["value"], dtype=float).reshape(spec.m, spec.l)
        return PolicySurface.constant(sol.grid, val)
    return sol.policy


def cmd_evaluate_cost(spec, cfg, seed, out, threads):
    sol = _solve(spec, cfg, out)
    pol = _policy_from_cfg(spec, cfg, sol)
    J = evaluate_policy_cost(spec, pol, sol.p_flow, sol.nu_flow)
    est = importance_cost(spec, pol, sol.p_flow, sol.nu_flow, max(cfg["mc"]["n_paths"], 100), seed,
                          threads=threads)
    out.json("cost.json", {"policy": cfg["policy"]["type"], "ode_per_state": J,
                           "ode_total": total_cost(spec, J), "importance": est.as_dict(),
                           "seed": seed, "converged": sol.converged})
    if not sol.converged:
        raise NotConverged


def cmd_verify(spec, cfg, seed, out, threads):
    sol = _solve(spec, cfg, out)
    s = cfg["solver"]
    sres, cres = consistency_residual(spec, sol)
    gap = best_response_gap(spec, sol, cfg["verify"]["n_candidates"], seed)
    diff, _, sol2 = two_start_agreement(spec, theta=s["damping"], tol=s["tol"],
                                        max_iter=s["max_iter"], first=sol)
    out.json("verify.json", {
        "converged": sol.converged, "state_res": sres, "control_res": cres, "tol": s["tol"],
        "best_response_gap": gap.gap, "worst_candidate": gap.worst,
        "worst_margin": gap.worst_margin, "n_candidates": gap.n_candidates,
        "two_start_sup_diff": diff, "second_start_converged": sol2.converged,
        "issues": validate_spec(spec)})
    if not sol.converged:
        raise NotConverged


def cmd_nplayer(spec, cfg, seed, out, threads):
    sol = _solve(spec, cfg, out)
    npc = cfg["nplayer"]
    ss_chaos, ss_dev = as_seed_sequence(seed).spawn(2)
    rep = chaos_error(spec, sol, npc["N_list"], npc["reps"], ss_chaos, threads=threads)
    out.csv("chaos.csv", ["N", "mse_state", "se_state", "mse_w1", "se_w1", "bound_m_over_4N"],
            rep.rows())
    devs = deviation_grid(spec, sol, npc["n_deviations"])
    rows, summary = [], {}
    for N, ss in zip(npc["N_deviation"], ss_dev.spawn(len(npc["N_deviation"]))):
        d = deviation_gain(spec, sol, N, [p for _, p in devs], npc["n_mc"], ss,
                           names=[n for n, _ in devs], threads=threads)
        rows.extend(d.rows())
        summary[str(N)] = {"max_profit": d.max_profit, "cost_a_hat": d.cost_ahat}
    out.csv("deviations.csv", ["deviation_id", "gain", "se", "N"], rows)
    out.json("nplayer.json", {"slope_state": rep.slope_state, "slope_w1": rep.slope_w1,
                              "bound_ok": rep.bound_ok, "deviations": summary,
                              "converged": sol.converged})
    if not sol.converged:
        raise NotConverged


def cmd_check_monotone(spec, cfg, seed, out, threads):
    try:
        rep = check_monotonicity(spec, rng=seed)
        body = {"applicable": True, "monotone": rep.g_monotone and rep.f1_monotone, **rep.as_dict()}
    except StructuralError as exc:
        body = {"applicable": False, "monotone": False, "reason": str(exc)}
    out.json("monotone.json", body)


def cmd_likelihood(spec, cfg, seed, out, threads):
    lc = cfg.get("likelihood")
    n = max(cfg["mc"]["n_paths"], 100)
    if lc and "rates" in lc:
        Q = RateMatrix.from_offdiagonal(lc["rates"], spec.mask)
        rep = measure_consistency(Q.entries, spec.reference, lc.get("p0", spec.p_init.tolist()),
                                  lc.get("t", spec.T), n, seed, n_steps=lc.get("n_steps", 1000),
                                  threads=threads)
    else:
        grid = _grid(spec, cfg)
        p, nu = default_flows(spec, grid)
        _, pol = solve_value(spec, p, nu)
        table = controlled_rate_table(spec, pol, p, nu)
        rep = measure_consistency(table, spec.reference, spec.p_init, spec.T, n, seed,
                                  n_steps=grid.n_steps, threads=threads)
    out.json("likelihood.json", {**rep.as_dict(), "seed": seed})


HANDLERS = {"solve": cmd_solve, "simulate": cmd_simulate, "evaluate-cost": cmd_evaluate_cost,
            "verify-equilibrium": cmd_verify, "nplayer": cmd_nplayer,
            "check-monotone": cmd_check_monotone, "likelihood-check": cmd_likelihood}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfgfinite", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="scenario JSON file")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--out", default=None, help="output directory (default: out/<command>)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker cap for path simulation (env MFG_THREADS)")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        spec = spec_from_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    seed = cfg["seed"] if args.seed is None else args.seed
    threads = args.threads or int(os.environ.get("MFG_THREADS", "1") or 1)
    out = RunDir(Path(args.out or cfg.get("outputs") or Path("out") / args.command))
    code = 0
    try:
        HANDLERS[args.command](spec, cfg, seed, out, threads)
    except NotConverged:
        print("fixed-point iteration did not reach the tolerance; see trace.csv", file=sys.stderr)
        code = 2
    except StructuralError as exc:
        print(f"structural error: {exc}", file=sys.stderr)
        code = 1
    out.manifest(args.command, cfg, seed)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
