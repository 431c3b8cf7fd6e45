"""Paradigm sweeps: matched-seed runs, medians, ordering assertions."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from statistics import median

from .. import kpi
from ..coordination import Mode
from ..errors import ConfigError, UndefinedInputError
from .config import RunConfig, load_preset, run_config_from_dict
from .episode import Episode, run_episode
from . import traceio

AGGREGATE_FIELDS = ("ras", "dib", "mbs", "total_bits", "success_rate")


@dataclass
class ExperimentSpec:
    base_config: dict
    paradigms: tuple[str, ...]
    seeds: tuple[int, ...]
    out_dir: str = "out"
    charts: tuple[str, ...] = ()
    write_traces: bool = False

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentSpec":
        try:
            base = raw["base_config"]
            if isinstance(base, str):
                base = load_preset(base)
            seeds_raw = raw["seeds"]
            if isinstance(seeds_raw, dict):
                start = int(seeds_raw["start"])
                count = int(seeds_raw["count"])
                seeds = tuple(range(start, start + count))
            else:
                seeds = tuple(int(s) for s in seeds_raw)
            if not seeds:
                raise ConfigError("seed range must be non-empty")
            paradigms = tuple(raw.get("paradigms", ("classical", "semantic", "agentic")))
            overrides = raw.get("overrides", {})
            base = dict(base)
            base.update(overrides)
            return ExperimentSpec(
                base_config=base,
                paradigms=paradigms,
                seeds=seeds,
                out_dir=raw.get("out_dir", "out"),
                charts=tuple(raw.get("charts", ())),
                write_traces=bool(raw.get("write_traces", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid experiment spec: {exc}") from exc

    @staticmethod
    def load(path: str) -> "ExperimentSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return ExperimentSpec.from_dict(json.load(fh))


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)  # paradigm -> median KPI dict
    overhead: dict = field(default_factory=dict)  # paradigm -> percent of semantic

    def paradigm_values(self, paradigm: str, key: str) -> list:
        return [row[key] for row in self.rows if row["paradigm"] == paradigm]


def _config_for(spec: ExperimentSpec, paradigm: str, seed: int) -> RunConfig:
    raw = dict(spec.base_config)
    raw["paradigm"] = paradigm
    raw["seed"] = seed
    return run_config_from_dict(raw)


def sweep(spec: ExperimentSpec, trace_sink=None) -> SweepResult:
    """Run all (paradigm, seed) pairs with one shared baseline per seed.

    Aggregation is order-independent: rows are sorted by (paradigm, seed)
    before medians are taken, so permuted execution produces identical
    output.
    """
    result = SweepResult()
    baselines: dict[int, float] = {}
    for seed in spec.seeds:
        base_cfg = _config_for(spec, "none", seed)
        base_trace = Episode(base_cfg).run()
        if not base_trace.records:
            raise UndefinedInputError("sweep horizon must be positive")
        baselines[seed] = kpi.success_rate(base_trace)

    for paradigm in spec.paradigms:
        for seed in spec.seeds:
            cfg = _config_for(spec, paradigm, seed)
            episode = Episode(cfg)
            trace = episode.run()
            report = kpi.build_report(trace, baselines[seed], cfg.eps_mbs)
            row = {
                "seed": seed,
                "paradigm": paradigm,
                "scenario": cfg.scenario["name"],
                "config_hash": f"{cfg.config_hash():016x}",
                **report.as_dict(),
            }
            row.pop("overhead_vs_semantic")
            result.rows.append(row)
            if trace_sink is not None:
                trace_sink(cfg, trace, report, episode.decision_logs)

    result.rows.sort(key=lambda r: (r["paradigm"], r["seed"]))
    for paradigm in spec.paradigms:
        result.aggregate[paradigm] = {
            key: median(result.paradigm_values(paradigm, key)) for key in AGGREGATE_FIELDS
        }
    if "semantic" in spec.paradigms:
        bits = {p: result.paradigm_values(p, "total_bits") for p in spec.paradigms}
        result.overhead = kpi.overhead_relative(bits)
        for paradigm in spec.paradigms:
            result.aggregate[paradigm]["overhead_pct"] = result.overhead[paradigm]
    return result


class OrderingFailure(Exception):
    pass


def assert_ordering(result: SweepResult, kpis) -> None:
    """Check that the agentic paradigm dominates; raises OrderingFailure."""
    agg = result.aggregate
    required = {"classical", "semantic", "agentic"}
    if not required.issubset(agg.keys()):
        raise UndefinedInputError("ordering assertions need all three paradigms")
    problems = []
    for key in kpis:
        key = key.strip().lower()
        if key in ("ras", "mbs", "dib", "success", "success_rate"):
            field_name = "success_rate" if key == "success" else key
            a = agg["agentic"][field_name]
            s = agg["semantic"][field_name]
            c = agg["classical"][field_name]
            if not (a > s > c):
                problems.append(f"{field_name}: agentic={a} semantic={s} classical={c}")
        elif key in ("overhead", "bits", "total_bits"):
            a = agg["agentic"]["total_bits"]
            s = agg["semantic"]["total_bits"]
            c = agg["classical"]["total_bits"]
            if not (c > s > a):
                problems.append(f"total_bits: classical={c} semantic={s} agentic={a}")
        else:
            raise ConfigError(f"unknown ordering KPI {key!r}")
    if problems:
        raise OrderingFailure("; ".join(problems))


def write_runs_csv(path: str, result: SweepResult) -> None:
    fields = [
        "seed", "paradigm", "scenario", "config_hash",
        "ras", "dib", "mbs", "total_bits", "success_rate", "baseline_success",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for row in result.rows:
            writer.writerow(row)


def write_aggregate_csv(path: str, result: SweepResult) -> None:
    fields = ["paradigm", *AGGREGATE_FIELDS, "overhead_pct"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for paradigm in sorted(result.aggregate):
            row = {"paradigm": paradigm, **result.aggregate[paradigm]}
            row.setdefault("overhead_pct", "")
            writer.writerow(row)


def run_and_persist(cfg: RunConfig, out_dir: str, stem: str | None = None):
    """Run one episode and write its trace and report files."""
    os.makedirs(out_dir, exist_ok=True)
    trace, report, logs = run_episode(cfg)
    if stem is None:
        stem = f"{cfg.scenario['name']}_{cfg.paradigm.value}_seed{cfg.seed}"
    trace_path = os.path.join(out_dir, stem + ".trace.bin")
    traceio.write_trace(trace_path, trace)
    if report is not None:
        traceio.write_report(traceio.report_path_for(trace_path), report, trace, logs)
    return trace_path, trace, report
