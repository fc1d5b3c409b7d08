"""Command-line front end: ``capclust gen|solve|kinetic|compare|bench``.

Exit codes: 0 success, 2 usage error, 3 unreadable scenario, 4 solver did not
converge, 5 oracle rejected the instance.
"""
import argparse
import csv
import io
import sys
import time

import numpy as np

from . import scenario as sc
from .errors import CapclustError, GeometryError, OracleError, ScenarioError, SnapshotError
from .kinetic import count_changes, kinetic_solve
from .oracle import exact_assignment
from .transport import METHODS, SolverConfig, mse, residual, solve

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_NOT_CONVERGED = 4
EXIT_ORACLE = 5

TRACE_COLUMNS = ["iteration", "mse", "cost", "step", "damped", "source"]
KINETIC_COLUMNS = ["snapshot", "t", "resolved", "outer_iters", "cost", "mse", "max_load_ratio",
                   "changed_terminals", "wall_time"]
COMPARE_COLUMNS = ["method", "n", "k", "cost", "gap", "iters", "status", "wall_time"]
BENCH_COLUMNS = ["dist", "n", "k", "seed", "method", "cost", "iters", "status", "wall_time"]
# every results table ends with this constant column
RESULTS_SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_csv(rows, columns, out):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns + ["schema_version"])
    for row in rows:
        w.writerow([fmt(row[c]) for c in columns] + [RESULTS_SCHEMA_VERSION])
    text = buf.getvalue()
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def parse_list(text):
    """``"1,2,3"``, ``"2..64"`` (doubling) or ``"100..400:100"`` (arithmetic)."""
    out = []
    try:
        for part in text.split(","):
            if ".." in part:
                lo, rest = part.split("..")
                if ":" in rest:
                    hi, step = rest.split(":")
                    out.extend(range(int(lo), int(hi) + 1, int(step)))
                else:
                    v, hi = int(lo), int(rest)
                    if v < 1:
                        raise ValueError
                    while v <= hi:
                        out.append(v)
                        v *= 2
            else:
                out.append(int(part))
    except ValueError:
        raise UsageError(f"cannot read {text!r} as a list of integers") from None
    if not out or min(out) < 1:
        raise UsageError(f"{text!r} must name positive integers")
    return out


def _overrides(args):
    return {"method": getattr(args, "method", None), "dw": args.dw, "eps": args.eps, "alpha": args.alpha,
            "max_outer": args.max_outer}


def _load(args, **extra):
    return _build(sc.load(args.scenario), args, **extra)


def _build(doc, args, **extra):
    return sc.build(doc, **{**_overrides(args), **extra})


def cmd_gen(args):
    if args.dist in ("train", "linear") and args.snapshots is None:
        args.snapshots = 15
    if args.tolerance and args.snapshots is None:
        raise UsageError("--tolerance needs --snapshots")
    solver = {k: v for k, v in _overrides(args).items() if v is not None}
    try:
        doc = sc.generate(args.dist, args.n, args.k, args.seed, domain=args.domain, segments=args.segments,
                          snapshots=args.snapshots, tolerance=args.tolerance or 0.0, solver=solver,
                          explicit=args.explicit)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = sc.dumps(doc)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_solve(args):
    loaded = _load(args)
    s = loaded.scenario
    start = time.perf_counter()
    heights, assignment, trace = solve(s.terminal_positions, s.masses, s.station_positions, s.caps, s.domain,
                                       s.config)
    elapsed = time.perf_counter() - start
    rows = [dict(r._asdict()) for r in trace.records]
    for r in rows:
        r["cost"] = loaded.cost_in_original_units(r["cost"])
    write_csv(rows, TRACE_COLUMNS, args.out)
    g = residual(assignment, s.caps)
    print(f"status={trace.status} iterations={trace.iterations} mse={mse(g):.6g} "
          f"cost={loaded.cost_in_original_units(assignment.cost):.12g} time={elapsed:.3f}s",
          file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def cmd_kinetic(args):
    doc = sc.load(args.scenario)
    if doc.kinetic is None and args.snapshots is None:
        raise UsageError("scenario has no kinetic block; pass --snapshots")
    loaded = _build(doc, args)
    s = loaded.scenario
    if args.tolerance is not None:
        if not 0.0 <= args.tolerance < 1.0:
            raise UsageError("--tolerance must lie in [0, 1)")
        s.tolerance = args.tolerance
    if args.snapshots is not None:
        s.snapshots = args.snapshots
    results = kinetic_solve(s, warm_start=not args.no_warm_start, carry=args.carry)
    rows = []
    for i, r in enumerate(results):
        rows.append({
            "snapshot": i, "t": r.t, "resolved": r.resolved, "outer_iters": r.outer_iterations,
            "cost": loaded.cost_in_original_units(r.assignment.cost),
            "mse": mse(residual(r.assignment, s.caps)),
            "max_load_ratio": float(np.max(r.assignment.loads / s.caps)),
            "changed_terminals": r.changed_terminals, "wall_time": r.wall_time,
        })
    write_csv(rows, KINETIC_COLUMNS, args.out)
    total_changes, _ = count_changes(results)
    iters = sum(r.outer_iterations for r in results)
    resolves = sum(r.resolved for r in results)
    failed = sum(r.resolved and not r.trace.converged for r in results)
    print(f"snapshots={len(results)} outer_iterations={iters} resolves={resolves} changes={total_changes} "
          f"not_converged={failed} time={sum(r.wall_time for r in results):.3f}s",
          file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK if failed == 0 else EXIT_NOT_CONVERGED


def _solver_row(name, loaded, config):
    s = loaded.scenario
    start = time.perf_counter()
    _, assignment, trace = solve(s.terminal_positions, s.masses, s.station_positions, s.caps, s.domain, config)
    return {"method": name, "n": s.n, "k": s.k, "cost": loaded.cost_in_original_units(assignment.cost),
            "iters": trace.iterations, "status": trace.status, "wall_time": time.perf_counter() - start}


def _oracle_row(loaded):
    s = loaded.scenario
    row = {"method": "oracle-flow", "n": s.n, "k": s.k, "iters": 0}
    start = time.perf_counter()
    try:
        # masses as written; capacities rescaled to the same total
        res = exact_assignment(s.terminal_positions, loaded.weights, s.station_positions,
                               s.caps * loaded.weights.sum(), s.config.alpha)
    except OracleError as exc:
        row.update(cost=float("nan"), status=f"rejected: {exc}", wall_time=time.perf_counter() - start)
        return row
    row.update(cost=loaded.cost_in_original_units(res.cost / loaded.weights.sum()), status="optimal",
               wall_time=time.perf_counter() - start)
    return row


def cmd_compare(args):
    loaded = _load(args)
    s = loaded.scenario
    if s.n > 5000 and not args.force:
        raise UsageError(f"n={s.n} is too large for the oracle (limit 5000; pass --force to try)")
    base = s.config
    newton = SolverConfig(**{**base.__dict__, "method": "newton-direct"})
    gd = SolverConfig(**{**base.__dict__, "method": "gradient-descent", "eps": args.gd_eps,
                         "max_outer": max(base.max_outer, args.gd_max_outer)})
    rows = [_solver_row("optran-newton", loaded, newton), _solver_row("optran-gd", loaded, gd), _oracle_row(loaded)]
    ref = rows[2]["cost"]
    for r in rows:
        r["gap"] = (r["cost"] - ref) / ref if np.isfinite(ref) and ref > 0 else float("nan")
    write_csv(rows, COMPARE_COLUMNS, args.out)
    if rows[2]["status"] != "optimal":
        print(rows[2]["status"], file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


def cmd_bench(args):
    ns = parse_list(args.n)
    ks = parse_list(args.k)
    methods = args.methods.split(",")
    for m in methods:
        if m not in METHODS + ("oracle-flow",):
            raise UsageError(f"unknown method {m!r}")
    rows = []
    failed = False
    for n in ns:
        for k in ks:
            doc = sc.generate(args.dist, n, k, args.seed,
                              solver={key: v for key, v in _overrides(args).items() if v is not None})
            loaded = sc.build(doc)
            for m in methods:
                if m == "oracle-flow":
                    row = _oracle_row(loaded)
                    row["status"] = "optimal" if row["status"] == "optimal" else "rejected"
                else:
                    cfg = SolverConfig(**{**loaded.scenario.config.__dict__, "method": m})
                    if m == "gradient-descent":
                        cfg.eps = args.gd_eps if args.eps is None else args.eps
                    try:
                        row = _solver_row(m, loaded, cfg)
                    except CapclustError as exc:
                        row = {"method": m, "n": n, "k": k, "cost": float("nan"), "iters": 0,
                               "status": f"error: {exc}", "wall_time": 0.0}
                row.update(dist=args.dist, seed=args.seed)
                failed |= row["status"] not in ("converged", "optimal")
                rows.append(row)
    rows.sort(key=lambda r: (r["n"], r["k"], methods.index(r["method"])))
    write_csv(rows, BENCH_COLUMNS, args.out)
    return EXIT_NOT_CONVERGED if failed else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="capclust", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def solver_flags(q, method=True):
        if method:
            q.add_argument("--method", choices=METHODS)
        q.add_argument("--dw", type=float, help="stop when the capacity-residual MSE is at most this")
        q.add_argument("--eps", type=float, help="Newton or gradient step length")
        q.add_argument("--alpha", type=float, help="cost exponent (default 2)")
        q.add_argument("--max-outer", type=int)

    g = sub.add_parser("gen", help="write a seeded scenario file")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--k", type=int, default=8)
    g.add_argument("--dist", choices=sc.DISTRIBUTIONS, default="uniform")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--domain", choices=("disk", "square"), default="disk")
    g.add_argument("--segments", type=int, default=64, help="sides of the polygon standing in for the disk")
    g.add_argument("--snapshots", type=int)
    g.add_argument("--tolerance", type=float)
    g.add_argument("--explicit", action="store_true", help="write terminals out instead of the generator block")
    g.add_argument("--out")
    solver_flags(g)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve the t=0 snapshot and write the iteration trace")
    s.add_argument("scenario")
    s.add_argument("--out")
    solver_flags(s)
    s.set_defaults(func=cmd_solve)

    k = sub.add_parser("kinetic", help="solve every snapshot and write one row per snapshot")
    k.add_argument("scenario")
    k.add_argument("--out")
    k.add_argument("--no-warm-start", action="store_true")
    k.add_argument("--tolerance", type=float)
    k.add_argument("--snapshots", type=int)
    k.add_argument("--carry", choices=("heights", "owners"), default="heights",
                   help="what a snapshot kept under the tolerance reuses")
    solver_flags(k)
    k.set_defaults(func=cmd_kinetic)

    c = sub.add_parser("compare", help="Newton, gradient descent and the exact oracle on one scenario")
    c.add_argument("scenario")
    c.add_argument("--out")
    c.add_argument("--gd-eps", type=float, default=0.1)
    c.add_argument("--gd-max-outer", type=int, default=100_000)
    c.add_argument("--force", action="store_true")
    solver_flags(c, method=False)
    c.set_defaults(func=cmd_compare)

    b = sub.add_parser("bench", help="sweep n and k over generated instances")
    b.add_argument("--n", default="1000,2000,4000,8000", help="e.g. 100,1000 or 2..64 (doubling) or 100..400:100")
    b.add_argument("--k", default="8")
    b.add_argument("--dist", choices=("uniform", "perturbed-grid"), default="uniform")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--methods", default="newton-direct", help="comma list of solver methods and/or oracle-flow")
    b.add_argument("--gd-eps", type=float, default=0.1)
    b.add_argument("--out")
    solver_flags(b, method=False)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"capclust: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"capclust: {args.scenario if hasattr(args, 'scenario') else 'scenario'}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (OSError, GeometryError) as exc:
        print(f"capclust: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SnapshotError as exc:
        print(f"capclust: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except CapclustError as exc:
        print(f"capclust: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
