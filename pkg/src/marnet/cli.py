"""Command-line entry points.

Exit codes: 0 success, 2 config error, 3 ordering assertion failure,
4 stale trace.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .errors import ConfigError, StaleTraceError, UndefinedInputError
from .harness import charts, sweep as sweep_mod, traceio
from .harness.config import load_run_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERTION = 3
EXIT_STALE = 4


def _cmd_run(args) -> int:
    cfg = load_run_config(args.config)
    cfg = cfg.with_overrides(
        seed=args.seed, paradigm=args.paradigm, horizon=args.horizon
    )
    trace_path, _trace, report = sweep_mod.run_and_persist(cfg, args.out)
    print(f"trace: {trace_path}")
    if report is None:
        print("empty trace (horizon 0); no KPI report")
        return EXIT_OK
    for key, value in report.as_dict().items():
        if value is not None:
            print(f"{key}: {value}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = sweep_mod.ExperimentSpec.load(args.spec)
    os.makedirs(spec.out_dir, exist_ok=True)
    sink = None
    if spec.write_traces:
        def sink(cfg, trace, report, logs):
            stem = f"{cfg.scenario['name']}_{cfg.paradigm.value}_seed{cfg.seed}"
            path = os.path.join(spec.out_dir, stem + ".trace.bin")
            traceio.write_trace(path, trace)
            traceio.write_report(traceio.report_path_for(path), report, trace, logs)

    result = sweep_mod.sweep(spec, trace_sink=sink)
    runs_csv = os.path.join(spec.out_dir, "runs.csv")
    agg_csv = os.path.join(spec.out_dir, "aggregate.csv")
    sweep_mod.write_runs_csv(runs_csv, result)
    sweep_mod.write_aggregate_csv(agg_csv, result)
    print(f"runs: {runs_csv}")
    print(f"aggregate: {agg_csv}")
    for kind in spec.charts:
        svg = charts.emit_chart(result.aggregate, kind)
        path = os.path.join(spec.out_dir, f"{kind}.svg")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
        print(f"chart: {path}")
    if args.assert_ordering:
        kpis = args.assert_ordering.split(",")
        try:
            sweep_mod.assert_ordering(result, kpis)
        except sweep_mod.OrderingFailure as exc:
            print(f"ordering assertion failed: {exc}", file=sys.stderr)
            return EXIT_ASSERTION
        print(f"ordering holds for: {args.assert_ordering}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    trace = traceio.replay(args.trace)
    print(f"replayed {len(trace.records)} slots, config {trace.config_hash:016x}; KPIs verified")
    return EXIT_OK


def _cmd_chart(args) -> int:
    aggregate = {}
    with open(args.infile, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            aggregate[row["paradigm"]] = {
                key: float(row[key]) if row.get(key) not in (None, "") else 0.0
                for key in ("ras", "dib", "mbs", "total_bits", "success_rate", "overhead_pct")
            }
    svg = charts.emit_chart(aggregate, args.kind)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(svg)
    print(f"chart: {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marnet",
        description="Two-agent coordination simulator: classical vs semantic vs agentic communication",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one episode and persist trace + KPI report")
    p_run.add_argument("--config", required=True, help="config file path or preset name")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument(
        "--paradigm", choices=["classical", "semantic", "agentic"], default=None
    )
    p_run.add_argument("--horizon", type=int, default=None)
    p_run.add_argument("--out", default="out")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a paradigm x seed sweep")
    p_sweep.add_argument("--spec", required=True, help="experiment spec JSON file")
    p_sweep.add_argument(
        "--assert-ordering",
        default=None,
        help="comma-separated KPIs that agentic must dominate (e.g. ras,overhead)",
    )
    p_sweep.set_defaults(func=_cmd_sweep)

    p_replay = sub.add_parser("replay", help="load a trace and re-verify its stored KPIs")
    p_replay.add_argument("--trace", required=True)
    p_replay.set_defaults(func=_cmd_replay)

    p_chart = sub.add_parser("chart", help="render an SVG chart from an aggregate CSV")
    p_chart.add_argument("--in", dest="infile", required=True)
    p_chart.add_argument("--kind", choices=["kpi_bars", "overhead_success"], required=True)
    p_chart.add_argument("--out", required=True)
    p_chart.set_defaults(func=_cmd_chart)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StaleTraceError as exc:
        print(f"stale trace: {exc}", file=sys.stderr)
        return EXIT_STALE
    except UndefinedInputError as exc:
        print(f"undefined input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
