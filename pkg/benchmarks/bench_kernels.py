"""Compiled vs numpy kernels on the same workloads.

    python3 benchmarks/bench_kernels.py [--paths 50000] [--repeat 3]

Both backends get identical seeds. The last column is the largest absolute
difference between their outputs (path samples should match exactly; the
log-likelihood may differ in the last bit because libm and numpy logs differ).
"""
import argparse
import time

import numpy as np

from mfgfinite import kernels
from mfgfinite.girsanov import batch_log_likelihood
from mfgfinite.markov import RateTable, TimeGrid, build_reference_generator, integrate_along, simulate_batch


def workloads(n_paths, m=4, n_steps=1000):
    grid = TimeGrid(1.0, n_steps)
    q0 = build_reference_generator(m)
    t = grid.nodes[:, None, None]
    R = q0.entries[None] * (1.0 + 0.5 * np.sin(3.0 * t + np.arange(m)[None, :, None]))
    R[:, np.arange(m), np.arange(m)] = 0.0
    table = RateTable(grid, R)
    coef = table.diag_coefficients()
    p0 = np.ones(m) / m

    def simulate():
        return simulate_batch(table, p0, n_paths, 1, lam=table.max_exit_rate())

    batch = simulate()
    return {
        "simulate": simulate,
        "states_at": lambda: batch.states_at(np.linspace(0.0, 1.0, 101)),
        "integrate": lambda: integrate_along(batch, coef, grid),
        "log_likelihood": lambda: batch_log_likelihood(batch, table, q0),
    }


def _fingerprint(x):
    if hasattr(x, "jump_times"):
        return np.concatenate([x.jump_times, x.jump_states, x.init]).astype(float)
    return np.asarray(x, dtype=float)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=50000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if "compiled" not in kernels.BACKENDS:
        print("compiled extension not built; only the numpy backend is available")
    results, prints = {}, {}
    for name in sorted(kernels.BACKENDS):
        kernels.use_backend(name)
        for task, fn in workloads(args.paths).items():
            best = np.inf
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                out = fn()
                best = min(best, time.perf_counter() - t0)
            results[name, task] = best
            prints[name, task] = _fingerprint(out)
    tasks = sorted({t for _, t in results})
    print(f"{'task':<16}" + "".join(f"{b:>12}" for b in sorted(kernels.BACKENDS)) + f"{'speedup':>10}{'max|diff|':>11}")
    for task in tasks:
        row = f"{task:<16}" + "".join(f"{results[b, task]:>11.3f}s" for b in sorted(kernels.BACKENDS))
        if "compiled" in kernels.BACKENDS:
            speed = results["python", task] / results["compiled", task]
            a, b = prints["python", task], prints["compiled", task]
            diff = float(np.abs(a - b).max()) if a.shape == b.shape else np.inf
            row += f"{speed:>9.1f}x{diff:>11.1e}"
        print(row)


if __name__ == "__main__":
    main()
