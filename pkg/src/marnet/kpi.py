"""Coordination KPIs computed from immutable traces.

Three headline indicators:
  ras  - fraction of slots whose joint action pair was compatible with the
         true world value (task success per slot is exactly this).
  dib  - task success improvement over a paired no-communication run,
         divided by total bits exchanged (floored at one bit).
  mbs  - fraction of slots where both agents' estimates of each other stay
         within a total-variation bound of the true beliefs.

Plus total-bit accounting and sweep-level overhead normalized to the
semantic paradigm. Everything is a pure function of the trace, so values
recomputed from a persisted trace match the ones computed online.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import median

from .belief import QUANT_STEPS
from .errors import UndefinedInputError


@dataclass(frozen=True)
class FrameInfo:
    kind: int
    bits: int
    seq: int


@dataclass(frozen=True)
class AgentSlotRecord:
    belief_cells: tuple[int, ...]
    est_peer_cells: tuple[int, ...]
    action: str
    frames_sent: tuple[FrameInfo, ...]
    frames_delivered: tuple[FrameInfo, ...]
    ambiguous: bool
    silence_applied: bool
    hard_reset: bool
    fsm_state: int
    surprise: float


@dataclass(frozen=True)
class StepRecord:
    slot: int
    world_value: int
    success: bool
    agents: tuple[AgentSlotRecord, AgentSlotRecord]


@dataclass
class Trace:
    format_version: int
    config_hash: int
    config: dict
    records: list[StepRecord] = field(default_factory=list)


@dataclass
class KPIReport:
    ras: float
    dib: float
    mbs: float
    total_bits: int
    success_rate: float
    baseline_success: float
    overhead_vs_semantic: float | None = None

    def as_dict(self) -> dict:
        return {
            "ras": self.ras,
            "dib": self.dib,
            "mbs": self.mbs,
            "total_bits": self.total_bits,
            "success_rate": self.success_rate,
            "baseline_success": self.baseline_success,
            "overhead_vs_semantic": self.overhead_vs_semantic,
        }


def _require_records(trace: Trace) -> list[StepRecord]:
    if not trace.records:
        raise UndefinedInputError("KPIs are undefined on an empty trace")
    return trace.records


def ras(trace: Trace) -> float:
    records = _require_records(trace)
    good = 0
    for rec in records:
        if rec.success:
            good += 1
    return good / len(records)


def success_rate(trace: Trace) -> float:
    # Per-slot task success is joint-action compatibility, i.e. the same
    # count ras is built on; kept as its own accessor for report clarity.
    return ras(trace)


def total_bits(trace: Trace) -> int:
    records = _require_records(trace)
    bits = 0
    for rec in records:
        for agent in rec.agents:
            for frame in agent.frames_sent:
                bits += frame.bits
    return bits


def dib(trace: Trace, baseline_success_no_comm: float) -> float:
    gain = success_rate(trace) - baseline_success_no_comm
    return gain / max(total_bits(trace), 1)


def _tv_cells(a: tuple[int, ...], b: tuple[int, ...]) -> float:
    acc = 0
    for i in range(len(a)):
        acc += abs(a[i] - b[i])
    return 0.5 * acc / QUANT_STEPS


def mbs(trace: Trace, epsilon: float = 0.15) -> float:
    """Both directions must be within epsilon (total variation, quantized cells)."""
    records = _require_records(trace)
    stable = 0
    for rec in records:
        a0, a1 = rec.agents
        if (
            _tv_cells(a0.est_peer_cells, a1.belief_cells) <= epsilon
            and _tv_cells(a1.est_peer_cells, a0.belief_cells) <= epsilon
        ):
            stable += 1
    return stable / len(records)


def overhead_relative(bits_by_paradigm: dict[str, list[int]]) -> dict[str, float]:
    """Median total bits per paradigm, normalized so semantic reads 100%."""
    if "semantic" not in bits_by_paradigm or not bits_by_paradigm["semantic"]:
        raise UndefinedInputError("overhead normalization needs a semantic baseline")
    base = median(bits_by_paradigm["semantic"])
    if base <= 0:
        base = 1
    out = {}
    for paradigm, bits in bits_by_paradigm.items():
        if not bits:
            raise UndefinedInputError(f"no runs recorded for paradigm {paradigm}")
        out[paradigm] = 100.0 * median(bits) / base
    return out


def build_report(trace: Trace, baseline_success: float, epsilon: float) -> KPIReport:
    return KPIReport(
        ras=ras(trace),
        dib=dib(trace, baseline_success),
        mbs=mbs(trace, epsilon),
        total_bits=total_bits(trace),
        success_rate=success_rate(trace),
        baseline_success=baseline_success,
    )
