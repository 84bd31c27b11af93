"""Command-line entry point: ``ustlab <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 resource guard, 4 oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path as FsPath

import numpy as np

from ..capacity import GreenTable, capacity_escape_mc, capacity_variational
from ..lattice import RngSeed
from ..tree import ball, extrinsic_stats, resistance_profile
from ..walk_stats import run_walk
from ..wilson import SpanningTree, wired_box_ust, zero_wired_box
from .config import ConfigError, ResourceGuardError, SweepConfig
from .fit import fit_exponents
from .oracles import MUTANTS, SUITES, oracle_check
from .sweep import fit_rows, run_sweep

EXIT_CONFIG, EXIT_RESOURCE, EXIT_ORACLE = 2, 3, 4


def _emit(text: str, out: str | None) -> None:
    if out:
        FsPath(out).parent.mkdir(parents=True, exist_ok=True)
        FsPath(out).write_text(text)
    else:
        sys.stdout.write(text)


def _table(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, sort_keys=True, indent=2) + "\n"
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _guard(d: int, L: int, cap: int) -> None:
    if (2 * L + 1) ** d > cap:
        raise ResourceGuardError(f"(2L+1)^d = {(2 * L + 1) ** d} exceeds the vertex cap {cap}")


def _tree_from_args(args) -> SpanningTree:
    if args.tree:
        return SpanningTree.load(args.tree)
    _guard(args.d, args.L, args.memory_cap)
    if args.boundary == "zero-wired":
        return zero_wired_box(args.d, args.L, RngSeed(args.seed))[0]
    return wired_box_ust(args.d, args.L, RngSeed(args.seed))


def cmd_sample_tree(args) -> int:
    tree = _tree_from_args(args)
    if not args.out:
        raise ConfigError("sample-tree needs --out")
    tree.save(args.out)
    print(json.dumps({"vertices": tree.n, "d": tree.d, "L": tree.L, "seed": args.seed, "out": args.out}))
    return 0


def cmd_analyze(args) -> int:
    tree = _tree_from_args(args)
    v = tree.origin
    rows = []
    for n, k, N, R in resistance_profile(tree, v, args.n):
        if k == n:
            b = ball(tree, v, n)
            rel, _ = extrinsic_stats(tree, v, n)
            rows.append({"n": n, "volume": b.size, "sphere": len(b.sphere), "resistance": R, "geodesics_k_eq_n": N, "extrinsic_radius": rel})
    _emit(_table(rows, args.format), args.out)
    return 0


def cmd_walk(args) -> int:
    tree = _tree_from_args(args)
    rows = []
    for k in range(args.walks):
        s = run_walk(tree, tree.origin, args.steps, RngSeed(args.seed).child(k))
        rows.append({"walk": k, "steps": s.steps, "end_distance": s.end_distance, "max_distance": s.max_distance,
                     "max_extrinsic": s.max_extrinsic, "range": s.range, "returns": s.returns,
                     "touched_boundary": s.touched_boundary})
    _emit(_table(rows, args.format), args.out)
    return 0


def _read_points(arg: str) -> np.ndarray:
    p = FsPath(arg)
    text = p.read_text() if p.exists() else arg.replace(";", "\n")
    rows = [list(map(int, line.replace(",", " ").split())) for line in text.splitlines() if line.strip()]
    return np.array(rows, dtype=np.int64)


def cmd_capacity(args) -> int:
    S = _read_points(args.points)
    seed = RngSeed(args.seed)
    out = {"points": S.tolist()}
    if args.method in ("escape", "both"):
        out["escape_mc"] = capacity_escape_mc(S, args.trials, seed=seed.child(0)).as_dict()
    if args.method in ("variational", "both"):
        span = int(np.abs(S[:, None, :] - S[None, :, :]).max())
        table = GreenTable.build(S.shape[1], span, args.green_trials, 10**6, seed.child(1))
        est, mu = capacity_variational(S, table)
        out["variational"] = est.as_dict()
        out["equilibrium_weights"] = mu.weights.tolist()
    _emit(json.dumps(out, sort_keys=True, indent=2) + "\n", args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = SweepConfig.load(
        args.config, seed=args.seed, out=args.out, format=args.format, threads=args.threads,
        d=args.d, L=args.L, trees=args.trees, walks=args.walks,
    )
    rows, fits = run_sweep(cfg)
    for f in fits:
        if "a" in f:
            flag = "" if f["b_identifiable"] else " (b unidentifiable)"
            print(f"{f['statistic']:>14} {f['model']:>6}: a={f['a']:.3f} b={f['b']:.3f} cond={f['condition']:.0f}{flag}")
    return 0


def cmd_oracle_check(args) -> int:
    suites = args.suite or list(SUITES)
    reports = oracle_check(suites, mutant=args.mutant, quick=args.quick)
    text = json.dumps({k: r.as_dict() for k, r in reports.items()}, sort_keys=True, indent=2) + "\n"
    _emit(text, args.out)
    for k, r in reports.items():
        print(f"{'PASS' if r.passed else 'FAIL'} {k}: {r.checked} checked, {r.failures} failures", file=sys.stderr)
    return 0 if all(r.passed for r in reports.values()) else EXIT_ORACLE


def cmd_fit(args) -> int:
    with open(args.input) as fh:
        rows = [dict(r, n=int(r["n"]), estimate=float(r["estimate"])) for r in csv.DictReader(fh)]
    if args.statistic:
        rows = [r for r in rows if r["statistic"] == args.statistic]
    if args.model:
        usable = [r for r in rows if r["n"] >= 3 and r["estimate"] > 0]
        try:
            fit = fit_exponents([r["n"] for r in usable], [r["estimate"] for r in usable], model=args.model)
        except ValueError as exc:
            raise ConfigError(f"cannot fit: {exc}") from exc
        fits = [fit.as_dict()]
    else:
        fits = fit_rows(rows)
    _emit(json.dumps(fits, sort_keys=True, indent=2) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--threads", type=int, default=None)

    tree_opts = argparse.ArgumentParser(add_help=False)
    tree_opts.add_argument("--tree", help="saved tree file instead of sampling")
    tree_opts.add_argument("--d", type=int, default=4)
    tree_opts.add_argument("--L", type=int, default=16)
    tree_opts.add_argument("--boundary", choices=("wired", "zero-wired"), default="wired")
    tree_opts.add_argument("--memory-cap", type=int, default=2**26)

    p = argparse.ArgumentParser(prog="ustlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample-tree", parents=[common, tree_opts], help="sample a wired-box UST")
    s.set_defaults(func=cmd_sample_tree)

    s = sub.add_parser("analyze", parents=[common, tree_opts], help="ball, resistance and geodesic profile of the origin")
    s.add_argument("--n", type=int, default=16)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("walk", parents=[common, tree_opts], help="random walks on a tree from the origin")
    s.add_argument("--steps", type=int, default=1024)
    s.add_argument("--walks", type=int, default=10)
    s.set_defaults(func=cmd_walk)

    s = sub.add_parser("capacity", parents=[common], help="capacity of a finite set")
    s.add_argument("--points", required=True, help="file with one point per line, or 'x,y,z,w;...'")
    s.add_argument("--method", choices=("escape", "variational", "both"), default="both")
    s.add_argument("--trials", type=int, default=20000)
    s.add_argument("--green-trials", type=int, default=2000)
    s.set_defaults(func=cmd_capacity)

    s = sub.add_parser("sweep", parents=[common], help="ensemble sweep with exponent fits")
    s.add_argument("--d", type=int, default=None)
    s.add_argument("--L", type=int, default=None)
    s.add_argument("--trees", type=int, default=None)
    s.add_argument("--walks", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("oracle-check", parents=[common], help="exact oracle batteries")
    s.add_argument("--suite", action="append", choices=SUITES)
    s.add_argument("--mutant", choices=sorted(MUTANTS))
    s.add_argument("--quick", action="store_true", help="reduced sample sizes")
    s.set_defaults(func=cmd_oracle_check)

    s = sub.add_parser("fit", parents=[common], help="fit exponents to a sweep CSV")
    s.add_argument("input")
    s.add_argument("--statistic")
    s.add_argument("--model", choices=("loglog", "power"))
    s.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is None and args.command != "sweep":
        args.seed = 0
    if getattr(args, "format", None) is None and args.command != "sweep":
        args.format = "csv"
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceGuardError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
