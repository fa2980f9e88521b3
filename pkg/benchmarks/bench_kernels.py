"""Time the compiled kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on identical inputs under both backends; outputs are
compared before timing so a speedup never hides a mismatch.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from chaoslab import kernels
from chaoslab.rng import stream


def _paths(n, steps, seed=0):
    rng = stream(seed, "bench")
    lo = -rng.uniform(0.5, 2.0, n)
    hi = rng.uniform(0.5, 2.0, n)
    return (np.zeros(n), lo, hi, rng.standard_normal((n, steps)), rng.random((n, steps)))


def case_bridge_step(n=200_000):
    x, lo, hi, z, u = _paths(n, 1)
    z, u = np.ascontiguousarray(z[:, 0]), np.ascontiguousarray(u[:, 0])
    return lambda: kernels.bridge_step(x.copy(), lo, hi, z, u, 1e-2)


def case_exit_block(n=5_000, steps=400):
    x, lo, hi, z, u = _paths(n, steps)
    return lambda: kernels.exit_block(x.copy(), lo, hi, z, u, 1e-2)


def case_series_direct(points=4_000, terms=2_048):
    rng = stream(1, "bench")
    t = rng.random(points)
    a1, a2 = rng.standard_normal((2, terms))
    return lambda: kernels.series_direct(t, a1, a2, 1)


CASES = {"bridge_step": case_bridge_step, "exit_block": case_exit_block,
         "series_direct": case_series_direct}


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, atol=1e-10)


def run(repeat=5):
    if "cython" not in kernels.available():
        print("compiled kernels not built; only the numpy backend is available", file=sys.stderr)
    before = kernels.backend()
    rows = []
    for name, make in CASES.items():
        fn = make()
        times, outs = {}, {}
        for b in kernels.available():
            kernels.use_backend(b)
            outs[b] = fn()
            times[b] = min(timeit.repeat(fn, number=1, repeat=repeat))
        row = {"kernel": name, "python_s": times["python"]}
        if "cython" in times:
            row["cython_s"] = times["cython"]
            row["speedup"] = times["python"] / times["cython"]
            row["match"] = bool(_same(outs["python"], outs["cython"]))
        rows.append(row)
    kernels.use_backend(before)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)
    rows = run(args.repeat)
    print(f"{'kernel':<14} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8}  match")
    for r in rows:
        print(f"{r['kernel']:<14} {r['python_s']:11.4f} {r.get('cython_s', float('nan')):11.4f} "
              f"{r.get('speedup', float('nan')):8.1f}  {r.get('match', '-')}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if all(r.get("match", True) for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
