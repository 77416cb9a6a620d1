"""Command-line interface.

Subcommands::

    solve-adversarial  robustness query around one dataset sample
    solve              general query file
    propagate-bounds   bounds dump for a query (interval or LP-tightened)
    bench              run a manifest of queries in vanilla and CEGAR modes
    plot               render a bench report as SVG cactus + scatter charts

Exit codes: 0 Unsat, 1 Sat, 2 Timeout, 3 error. Set CNNVERIFY_LOG=debug (or
any logging level name) for verbose logs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
from pathlib import Path

import numpy as np

from . import io
from .bounds import RELAXATIONS, interval_pass, lp_tighten
from .cegar import CegarConfig, solve_with_abstraction
from .policies import POLICIES
from .query import build_adversarial

log = logging.getLogger(__name__)

EXIT_UNSAT, EXIT_SAT, EXIT_TIMEOUT, EXIT_ERROR = 0, 1, 2, 3

_STATUS_EXIT = {"unsat": EXIT_UNSAT, "sat": EXIT_SAT, "timeout": EXIT_TIMEOUT}


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--policy", choices=POLICIES, default="centered")
    p.add_argument("--relaxation", choices=RELAXATIONS, default="new")
    p.add_argument("--step", type=int, default=1,
                   help="neurons restored per refinement")
    p.add_argument("--step-growth", action="store_true",
                   help="double the refinement step each iteration")
    p.add_argument("--timeout", type=float, default=3600.0)
    p.add_argument("--sub-timeout", type=float, default=800.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-abstraction", action="store_true",
                   help="direct verification, no abstraction loop")
    p.add_argument("--no-tighten", action="store_true",
                   help="skip LP bound tightening (interval bounds only)")
    p.add_argument("--out", type=Path, default=None, help="results file (JSON)")


def _config(args, **extra) -> CegarConfig:
    return CegarConfig(policy=args.policy, relaxation=args.relaxation,
                       step=args.step, step_growth=args.step_growth,
                       timeout=args.timeout, sub_timeout=args.sub_timeout,
                       seed=args.seed, no_abstraction=args.no_abstraction,
                       tighten=not args.no_tighten, **extra)


def _emit(report, args) -> int:
    verdict = report.verdict
    result = {
        "verdict": verdict.status,
        "solve_status": verdict.solve_status,
        "counterexample": verdict.counterexample,
        "stats": verdict.stats,
        "iterations": [row.as_dict() for row in report.iterations],
    }
    if args.out:
        io.write_results(result, args.out)
    print(f"verdict: {verdict.status}  status: {verdict.solve_status}  "
          f"runtime: {verdict.stats.get('runtime', 0.0):.3f}s")
    return _STATUS_EXIT[verdict.status]


def cmd_solve_adversarial(args) -> int:
    net = io.read_network(args.model)
    data = io.read_dataset(args.dataset)
    if not 0 <= args.sample_index < len(data):
        raise ValueError(f"sample index {args.sample_index} out of range")
    x0 = data.samples[args.sample_index]
    query = build_adversarial(net, x0, args.eps,
                              domain=(args.domain_low, args.domain_high))
    config = _config(args, x0=x0, test_set=data)
    return _emit(solve_with_abstraction(query, config), args)


def cmd_solve(args) -> int:
    query = io.read_query(args.query)
    data = io.read_dataset(args.dataset) if args.dataset else None
    config = _config(args, test_set=data)
    return _emit(solve_with_abstraction(query, config), args)


def cmd_propagate_bounds(args) -> int:
    query = io.read_query(args.query)
    net = query.network
    if args.interval_only:
        bounds = interval_pass(net, query.input_lo, query.input_hi)
    else:
        bounds = lp_tighten(net, query.input_lo, query.input_hi,
                            query.output_constraints, relaxation=args.relaxation)
        if bounds is None:
            print("verdict: unsat  status: lp_infeasible")
            return EXIT_UNSAT
    io.write_bounds(net, bounds, args.out)
    print(f"bounds written to {args.out}")
    return EXIT_UNSAT


def cmd_bench(args) -> int:
    manifest = [line.strip() for line in Path(args.manifest).read_text().splitlines()
                if line.strip() and not line.startswith("#")]
    rows = []
    for entry in manifest:
        qpath = Path(entry)
        if not qpath.is_absolute():
            qpath = Path(args.manifest).parent / qpath
        query = io.read_query(qpath)
        for mode in ("vanilla", "cegar"):
            config = _config(args)
            config.no_abstraction = mode == "vanilla"
            report = solve_with_abstraction(query, config)
            rows.append({"query": str(qpath), "mode": mode,
                         "verdict": report.verdict.status,
                         "solve_status": report.verdict.solve_status,
                         "runtime": report.verdict.stats.get("runtime", 0.0),
                         "refinement_steps":
                             report.verdict.stats.get("refinement_steps", 0)})
            log.info("%s [%s]: %s", qpath.name, mode, rows[-1]["verdict"])
    report = _aggregate(rows)
    out = args.out or Path("bench-report.json")
    io.write_results(report, out)
    agree = report["aggregates"]["verdict_agreement"]
    print(f"{len(manifest)} queries, {len(rows)} runs; verdict agreement: {agree}")
    print(f"report written to {out}")
    return EXIT_UNSAT if agree else EXIT_ERROR


def _aggregate(rows) -> dict:
    by_query = {}
    for row in rows:
        by_query.setdefault(row["query"], {})[row["mode"]] = row
    agreement = all(
        modes["vanilla"]["verdict"] == modes["cegar"]["verdict"]
        for modes in by_query.values()
        if "timeout" not in (modes["vanilla"]["verdict"], modes["cegar"]["verdict"]))
    status_counts = {}
    for row in rows:
        if row["mode"] == "cegar":
            key = f"{row['verdict']}:{row['solve_status']}"
            status_counts[key] = status_counts.get(key, 0) + 1
    runtimes = {mode: [r["runtime"] for r in rows if r["mode"] == mode]
                for mode in ("vanilla", "cegar")}
    return {
        "rows": rows,
        "aggregates": {
            "verdict_agreement": agreement,
            "solve_status_counts": status_counts,
            "runtime_mean": {m: statistics.fmean(v) if v else 0.0
                             for m, v in runtimes.items()},
            "runtime_median": {m: statistics.median(v) if v else 0.0
                               for m, v in runtimes.items()},
        },
    }


def _svg(points_by_series, width=480, height=360, title="") -> str:
    """Minimal polyline/point SVG chart; axes scaled to the data."""
    all_pts = [p for pts in points_by_series.values() for p in pts]
    if not all_pts:
        return f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"/>'
    xs = [p[0] for p in all_pts]
    ys = [p[1] for p in all_pts]
    x0, x1 = min(xs), max(xs) or 1.0
    y0, y1 = min(ys), max(ys) or 1.0
    sx = lambda x: 40 + (x - x0) / (x1 - x0 or 1.0) * (width - 60)
    sy = lambda y: height - 30 - (y - y0) / (y1 - y0 or 1.0) * (height - 60)
    colors = ["#1f77b4", "#d62728", "#2ca02c"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="{width // 2}" y="16" text-anchor="middle">{title}</text>',
             f'<line x1="40" y1="{height - 30}" x2="{width - 20}" y2="{height - 30}" stroke="black"/>',
             f'<line x1="40" y1="30" x2="40" y2="{height - 30}" stroke="black"/>']
    for color, (name, pts) in zip(colors, sorted(points_by_series.items())):
        path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in sorted(pts))
        parts.append(f'<polyline fill="none" stroke="{color}" points="{path}"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" fill="{color}"/>')
        parts.append(f'<text x="{width - 150}" y="{30 + 16 * len(parts) % 48}" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_plot(args) -> int:
    report = json.loads(Path(args.report).read_text())
    rows = report["rows"]
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cactus = {}
    for mode in ("vanilla", "cegar"):
        times = sorted(r["runtime"] for r in rows if r["mode"] == mode)
        cactus[mode] = [(t, i + 1) for i, t in enumerate(times)]
    (outdir / "cactus.svg").write_text(
        _svg(cactus, title="solved queries vs runtime"))
    by_query = {}
    for r in rows:
        by_query.setdefault(r["query"], {})[r["mode"]] = r["runtime"]
    scatter = [(m["vanilla"], m["cegar"]) for m in by_query.values()
               if len(m) == 2]
    (outdir / "scatter.svg").write_text(
        _svg({"vanilla-vs-cegar": scatter}, title="per-query runtime"))
    print(f"wrote {outdir / 'cactus.svg'} and {outdir / 'scatter.svg'}")
    return EXIT_UNSAT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cnnverify",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-adversarial",
                       help="targeted robustness query around a dataset sample")
    p.add_argument("model", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--sample-index", type=int, default=0)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--domain-low", type=float, default=0.0)
    p.add_argument("--domain-high", type=float, default=1.0)
    _add_common_flags(p)
    p.set_defaults(func=cmd_solve_adversarial)

    p = sub.add_parser("solve", help="solve a query file")
    p.add_argument("query", type=Path)
    p.add_argument("--dataset", type=Path, default=None,
                   help="test set for sample-based policies")
    _add_common_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("propagate-bounds", help="dump neuron bounds for a query")
    p.add_argument("query", type=Path)
    p.add_argument("--relaxation", choices=RELAXATIONS, default="new")
    p.add_argument("--interval-only", action="store_true",
                   help="skip LP tightening")
    p.add_argument("--out", type=Path, default=Path("bounds.txt"))
    p.set_defaults(func=cmd_propagate_bounds)

    p = sub.add_parser("bench", help="run a manifest of query files in both modes")
    p.add_argument("manifest", type=Path)
    _add_common_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="render a bench report as SVG charts")
    p.add_argument("report", type=Path)
    p.add_argument("--outdir", type=Path, default=Path("plots"))
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("CNNVERIFY_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # CLI boundary: report and signal failure
        log.debug("unhandled error", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
