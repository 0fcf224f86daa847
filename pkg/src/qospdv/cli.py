"""Command-line entry point.

Exit status: 0 success, 1 invalid input, 2 runtime failure, 3 a comparison
verdict failed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from .metrics import DEFAULT_PDV_MODE, PDV_MODES
from .report import FORMATS, RELATIONS, ClassMismatch, compare, emit_report, read_summary
from .scenario import ScenarioError, builtin_scenarios, load_scenario

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_COMPARE = 0, 1, 2, 3
OUT_ENV = "QOSPDV_OUT"

log = logging.getLogger("qospdv")


def _default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "results")) / name


def cmd_run(args) -> int:
    from .simulation import run_scenario

    spec = load_scenario(args.scenario).with_overrides(seed=args.seed, duration=args.duration)
    out = Path(args.out) if args.out else _default_out(spec.name)
    t0 = time.perf_counter()
    report = run_scenario(spec)
    wall = time.perf_counter() - t0
    emit_report(report, out, args.format, args.pdv_mode, figures=not args.no_figures)
    print(f"{spec.name}: {report.events} events in {wall:.1f} s; report in {out}")
    for cls, s in report.summaries(args.pdv_mode).items():
        print(f"  {cls:<6} avg {s.avg:.4e}  max {s.max:.4e}")
    if not report.conserved():
        log.error("packet accounting does not balance")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_compare(args) -> int:
    classes = args.classes.split(",") if args.classes else None
    verdicts = compare(args.a, args.b, args.relation, args.ratio, classes, args.pdv_mode)
    failed = 0
    for v in verdicts:
        mark = "pass" if v.passed else "FAIL"
        failed += not v.passed
        print(f"{v.cls:<6} a={v.a_avg:.4e} b={v.b_avg:.4e} ratio={v.ratio:.4e} {mark}")
    if args.plot:
        from .plotting import plot_avg_pdv

        runs = {Path(args.a).name or "a": read_summary(args.a, args.pdv_mode),
                Path(args.b).name or "b": read_summary(args.b, args.pdv_mode)}
        plot_avg_pdv(runs, Path(args.plot))
    return EXIT_COMPARE if failed else EXIT_OK


def cmd_list(args) -> int:
    for name, desc in builtin_scenarios():
        print(f"{name:<12}{desc}")
    return EXIT_OK


def cmd_validate(args) -> int:
    spec = load_scenario(args.scenario)
    n_links = len(spec.topology.links)
    print(f"{spec.name}: ok (IPv{spec.ip_version}, {spec.qos_mode}, {len(spec.topology.nodes)} nodes, "
          f"{n_links} links, {len(spec.apps)} applications)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qospdv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario and write its report")
    r.add_argument("--scenario", required=True, help="built-in name or TOML path")
    r.add_argument("--seed", type=int)
    r.add_argument("--duration", type=float, help="simulated seconds")
    r.add_argument("--out", help=f"report directory (default ${OUT_ENV}/<name> or results/<name>)")
    r.add_argument("--pdv-mode", choices=PDV_MODES, default=DEFAULT_PDV_MODE)
    r.add_argument("--format", choices=FORMATS, default="csv")
    r.add_argument("--no-figures", action="store_true")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="check a relation between two reports' average PDV")
    c.add_argument("--a", required=True, help="report directory")
    c.add_argument("--b", required=True, help="report directory")
    c.add_argument("--relation", required=True, choices=RELATIONS)
    c.add_argument("--ratio", type=float, help="bound for ratio-bound: a <= ratio * b")
    c.add_argument("--classes", help="comma-separated subset of classes")
    c.add_argument("--pdv-mode", choices=PDV_MODES,
                   help="summary to compare (default: each report's summary.csv)")
    c.add_argument("--plot", help="also write a bar chart to this path")
    c.set_defaults(func=cmd_compare)

    l = sub.add_parser("list-scenarios", help="show the built-in scenarios")
    l.set_defaults(func=cmd_list)

    v = sub.add_parser("validate", help="parse and check a scenario file")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "compare" and args.relation == "ratio-bound" and args.ratio is None:
        print("error: ratio-bound needs --ratio", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ScenarioError, ClassMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
