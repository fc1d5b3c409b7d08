"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_backends.py [--repeat 3] [--out results.csv]

Each row times one kernel on one instance size with both backends and
checks that they return the same answer.
"""
import argparse
import csv
import sys
import time

import numpy as np

from capclust import _backend
from capclust.geom import regular_polygon, site_order
from capclust.oracle import cost_matrix


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    dom = regular_polygon(64)
    for k in (8, 64, 256):
        sites = rng.uniform(-0.7, 0.7, (k, 2))
        h = rng.uniform(0, 0.05, k)
        order = site_order(sites)
        yield "power_cells", f"k={k}", (lambda m, s=sites, h=h, o=order: m.power_cells(s, h, dom, o))
    for n, k in ((10_000, 8), (100_000, 8), (20_000, 200)):
        pts = rng.uniform(-0.7, 0.7, (n, 2))
        sites = rng.uniform(-0.7, 0.7, (k, 2))
        h = rng.uniform(0, 0.05, k)
        yield "argmin_power", f"n={n} k={k}", (lambda m, p=pts, s=sites, h=h: m.argmin_power(p, s, h, 2.0))
    for n, k in ((200, 4), (500, 8), (1000, 8)):
        pts = rng.uniform(-1, 1, (n, 2))
        sites = rng.uniform(-0.7, 0.7, (k, 2))
        supply = np.ones(n, dtype=np.int64)
        demand = np.full(k, n // k, dtype=np.int64)
        demand[: n % k] += 1
        C = cost_matrix(pts, sites)
        yield "transport_ssp", f"n={n} k={k}", (lambda m, a=supply, b=demand, c=C: m.transport_ssp(a, b, c))


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, list):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    if a is None or b is None:
        return a is b
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    if "compiled" not in _backend.available_backends():
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    fast = _backend.get_kernels("compiled")
    slow = _backend.get_kernels("python")
    rows = []
    for kernel, size, fn in cases(np.random.default_rng(args.seed)):
        t_fast, r_fast = best_of(lambda: fn(fast), args.repeat)
        t_slow, r_slow = best_of(lambda: fn(slow), args.repeat)
        rows.append([kernel, size, f"{t_fast:.6g}", f"{t_slow:.6g}", f"{t_slow / t_fast:.1f}",
                     "yes" if same(r_fast, r_slow) else "NO"])
    header = ["kernel", "size", "compiled_s", "python_s", "speedup", "identical"]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if args.out:
        out.close()
    return 0 if all(r[-1] == "yes" for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main())
