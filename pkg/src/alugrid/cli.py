"""Command-line drivers: ``main_ball``, ``main_transport`` and ``main_euler``.

Usage: ``main_X [problem-nr] [startLevel] [maxLevel] [flags]``.  Exit codes:
0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import partition as part
from .fv.driver import RunConfig, run
from .fv.problems import PROBLEMS, registry_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_DEFAULT_LEVELS = {"ball": (1, 4), "transport": (2, 4), "euler": (0, 3)}


def _parser(kind: str) -> argparse.ArgumentParser:
    start, top = _DEFAULT_LEVELS[kind]
    ap = argparse.ArgumentParser(prog=f"main_{kind}", description=f"{kind} example on simulated ranks")
    ap.add_argument("problem", type=int, nargs="?", default=0, help="problem number (see --list)")
    ap.add_argument("start_level", type=int, nargs="?", default=start)
    ap.add_argument("max_level", type=int, nargs="?", default=top)
    ap.add_argument("--ranks", type=int, default=1)
    g = ap.add_mutually_exclusive_group()
    g.add_argument("--steps", type=int)
    g.add_argument("--final-time", type=float)
    ap.add_argument("--lb-every", type=int, default=1, help="check the rebalance trigger every N steps (0: never)")
    ap.add_argument("--method", type=int, help="load-balancing method id, overrides alugrid.cfg")
    ap.add_argument("--output", default="output", help="directory for metrics.csv and snapshots")
    ap.add_argument("--vtk", action="store_true", help="write legacy-VTK snapshots")
    mode = ap.add_mutually_exclusive_group()
    mode.add_argument("--deterministic", dest="mode", action="store_const", const="deterministic")
    mode.add_argument("--concurrent", dest="mode", action="store_const", const="concurrent")
    ap.set_defaults(mode="deterministic")
    ap.add_argument("--overlap", action="store_true", help="overlap the ghost exchange with interior work")
    ap.add_argument("--no-timings", action="store_true", help="write zeros in the wall-clock columns")
    if kind != "ball":
        ap.add_argument("--tol-refine", type=float)
        ap.add_argument("--tol-coarsen", type=float)
    ap.add_argument("--list", action="store_true", help="print the problem registry and exit")
    return ap


def _config_error(msg: str, kind: str | None = None) -> int:
    print(f"error: {msg}", file=sys.stderr)
    if kind is not None:
        print(registry_table(kind), file=sys.stderr)
    return EXIT_CONFIG


def _main(kind: str, argv) -> int:
    args = _parser(kind).parse_args(argv)
    if args.list:
        print(registry_table(kind))
        return EXIT_OK
    if args.problem not in PROBLEMS[kind]:
        return _config_error(f"unknown problem {args.problem}; available problems:", kind)
    if args.start_level < 0 or args.max_level < args.start_level:
        return _config_error("need 0 <= startLevel <= maxLevel")
    if args.ranks < 1:
        return _config_error("--ranks must be >= 1")
    if args.steps is not None and args.steps < 0:
        return _config_error("--steps must be >= 0")
    try:
        lb = part.load_config()
        if args.method is not None:
            part.check_method(args.method)
            lb = part.LBConfig(lb.lb_under, lb.lb_over, args.method)
        else:
            part.check_method(lb.method)
        if lb.method in part.EXTERNAL_METHODS:
            part.external_partitioner(lb.method)  # no plug-ins can be registered from the command line
    except (part.ConfigError, part.PartitionError) as exc:
        return _config_error(str(exc))

    out = Path(args.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        metrics = out / "metrics.csv"
        metrics.touch()
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    cfg = RunConfig(
        kind=kind, problem=args.problem, start_level=args.start_level, max_level=args.max_level,
        ranks=args.ranks, steps=args.steps, final_time=args.final_time, lb_every=args.lb_every,
        lb_config=lb, output=str(out), vtk=args.vtk, mode=args.mode, overlap=args.overlap,
        timings=not args.no_timings,
        tol_refine=getattr(args, "tol_refine", None), tol_coarsen=getattr(args, "tol_coarsen", None),
    )
    try:
        result = run(cfg)
    except (part.ConfigError, ValueError) as exc:
        if isinstance(exc, part.ConfigError):
            return _config_error(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report every runtime failure with the stable exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        metrics.write_text(result.metrics_csv())
        digest = result.digest()
        (out / "digest.txt").write_text(digest + "\n")
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    r0 = result.ranks[0]
    print(f"steps {len(result.rows)}  final time {r0.final_time:.6g}  leaves {r0.global_leaves[-1] if r0.global_leaves else 0}")
    if kind == "ball":
        n0 = r0.initial_leaves
        band = [c / n0 for c in r0.global_leaves] if n0 else []
        print(f"initial leaves {n0}  band [{min(band, default=1):.4f}, {max(band, default=1):.4f}]  "
              f"resolved {all(r0.resolved)}  empty rank seen {any(r.empty_rank_seen for r in result.ranks)}")
    elif kind == "euler":
        print(f"positivity {'ok' if all(r.positive for r in result.ranks) else 'VIOLATED'}")
        if not all(r.positive for r in result.ranks):
            return EXIT_RUNTIME
    else:
        m = r0.masses
        print(f"mass drift {abs(m[-1] - m[0]):.3e}")
    print(f"digest {digest}")
    print(f"metrics {metrics}")
    return EXIT_OK


def main_ball(argv=None) -> int:
    return _main("ball", argv)


def main_transport(argv=None) -> int:
    return _main("transport", argv)


def main_euler(argv=None) -> int:
    return _main("euler", argv)


if __name__ == "__main__":  # pragma: no cover
    prog = Path(sys.argv[0]).name
    sys.exit({"main_ball": main_ball, "main_euler": main_euler}.get(prog, main_transport)())
