"""Binary trace persistence: JSON header, length-prefixed records, checksum."""

from __future__ import annotations

import json
import os
import struct

from .. import kpi
from ..errors import StaleTraceError, UndefinedInputError
from ..rng import fnv1a64
from .config import FORMAT_VERSION, canonical_json

_MAGIC = b"MARN"


def _encode_agent(agent: kpi.AgentSlotRecord, action_index: dict) -> bytes:
    parts = [struct.pack("<B", len(agent.belief_cells))]
    parts.append(struct.pack(f"<{len(agent.belief_cells)}H", *agent.belief_cells))
    parts.append(struct.pack(f"<{len(agent.est_peer_cells)}H", *agent.est_peer_cells))
    parts.append(struct.pack("<B", action_index[agent.action]))
    for frames in (agent.frames_sent, agent.frames_delivered):
        parts.append(struct.pack("<B", len(frames)))
        for fr in frames:
            parts.append(struct.pack("<BII", fr.kind, fr.bits, fr.seq))
    flags = (
        (1 if agent.ambiguous else 0)
        | (2 if agent.silence_applied else 0)
        | (4 if agent.hard_reset else 0)
    )
    parts.append(struct.pack("<BB", flags, agent.fsm_state))
    parts.append(struct.pack("<d", agent.surprise))
    return b"".join(parts)


def _decode_agent(buf: bytes, offset: int, actions: list) -> tuple[kpi.AgentSlotRecord, int]:
    (n_cells,) = struct.unpack_from("<B", buf, offset)
    offset += 1
    belief = struct.unpack_from(f"<{n_cells}H", buf, offset)
    offset += 2 * n_cells
    est = struct.unpack_from(f"<{n_cells}H", buf, offset)
    offset += 2 * n_cells
    (action_idx,) = struct.unpack_from("<B", buf, offset)
    offset += 1
    frame_lists = []
    for _ in range(2):
        (count,) = struct.unpack_from("<B", buf, offset)
        offset += 1
        frames = []
        for _ in range(count):
            kind, bits, seq = struct.unpack_from("<BII", buf, offset)
            offset += 9
            frames.append(kpi.FrameInfo(kind, bits, seq))
        frame_lists.append(tuple(frames))
    flags, fsm_state = struct.unpack_from("<BB", buf, offset)
    offset += 2
    (surprise,) = struct.unpack_from("<d", buf, offset)
    offset += 8
    return (
        kpi.AgentSlotRecord(
            belief_cells=belief,
            est_peer_cells=est,
            action=actions[action_idx],
            frames_sent=frame_lists[0],
            frames_delivered=frame_lists[1],
            ambiguous=bool(flags & 1),
            silence_applied=bool(flags & 2),
            hard_reset=bool(flags & 4),
            fsm_state=fsm_state,
            surprise=surprise,
        ),
        offset,
    )


def _encode_record(rec: kpi.StepRecord, action_index: dict) -> bytes:
    body = [struct.pack("<IBB", rec.slot, rec.world_value, 1 if rec.success else 0)]
    for agent in rec.agents:
        body.append(_encode_agent(agent, action_index))
    return b"".join(body)


def write_trace(path: str, trace: kpi.Trace) -> None:
    actions = list(trace.config["scenario"]["actions"])
    action_index = {name: i for i, name in enumerate(actions)}
    header = {
        "format_version": trace.format_version,
        "config_hash": f"{trace.config_hash:016x}",
        "config": trace.config,
    }
    header_bytes = canonical_json(header)
    record_blobs = []
    for rec in trace.records:
        blob = _encode_record(rec, action_index)
        record_blobs.append(struct.pack("<I", len(blob)) + blob)
    body = b"".join(record_blobs)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HI", trace.format_version, len(header_bytes)))
        fh.write(header_bytes)
        fh.write(struct.pack("<I", len(trace.records)))
        fh.write(body)
        fh.write(struct.pack("<Q", fnv1a64(body)))


def read_trace(path: str) -> kpi.Trace:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise StaleTraceError(f"{path}: not a trace file")
    version, header_len = struct.unpack_from("<HI", blob, 4)
    if version != FORMAT_VERSION:
        raise StaleTraceError(
            f"{path}: format version {version}, this build reads {FORMAT_VERSION}"
        )
    offset = 10
    header = json.loads(blob[offset : offset + header_len])
    offset += header_len
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    body = blob[offset:-8]
    (stored_sum,) = struct.unpack_from("<Q", blob, len(blob) - 8)
    if fnv1a64(body) != stored_sum:
        raise StaleTraceError(f"{path}: checksum failure, trace body corrupted")
    stored_hash = int(header["config_hash"], 16)
    recomputed = fnv1a64(canonical_json(header["config"]))
    if recomputed != stored_hash:
        raise StaleTraceError(
            f"{path}: config hash mismatch ({stored_hash:016x} stored, {recomputed:016x} from echo)"
        )
    actions = list(header["config"]["scenario"]["actions"])
    records = []
    pos = 0
    for _ in range(count):
        (length,) = struct.unpack_from("<I", body, pos)
        pos += 4
        rec_buf = body[pos : pos + length]
        pos += length
        slot, world_value, success = struct.unpack_from("<IBB", rec_buf, 0)
        agent_offset = 6
        agents = []
        for _ in range(2):
            agent, agent_offset = _decode_agent(rec_buf, agent_offset, actions)
            agents.append(agent)
        records.append(kpi.StepRecord(slot, world_value, bool(success), tuple(agents)))
    return kpi.Trace(version, stored_hash, header["config"], records)


def report_path_for(trace_path: str) -> str:
    base = trace_path
    if base.endswith(".trace.bin"):
        base = base[: -len(".trace.bin")]
    return base + ".report.json"


def write_report(path: str, report: kpi.KPIReport, trace: kpi.Trace, decision_logs) -> None:
    doc = {
        "config_hash": f"{trace.config_hash:016x}",
        "kpis": report.as_dict(),
        "candidate_logs": decision_logs,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def replay(trace_path: str) -> kpi.Trace:
    """Load a trace and re-verify stored KPI values against recomputation."""
    trace = read_trace(trace_path)
    if not trace.records:
        raise UndefinedInputError("cannot replay an empty trace")
    sidecar = report_path_for(trace_path)
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            stored = json.load(fh)
        if stored.get("config_hash") != f"{trace.config_hash:016x}":
            raise StaleTraceError(f"{sidecar}: report belongs to a different config")
        kpis = stored["kpis"]
        eps = trace.config.get("eps_mbs", 0.15)
        recomputed = {
            "ras": kpi.ras(trace),
            "mbs": kpi.mbs(trace, eps),
            "total_bits": kpi.total_bits(trace),
            "success_rate": kpi.success_rate(trace),
            "dib": kpi.dib(trace, kpis["baseline_success"]),
        }
        for key, value in recomputed.items():
            if kpis[key] != value:
                raise StaleTraceError(
                    f"{trace_path}: stored {key}={kpis[key]!r} but recomputed {value!r}"
                )
    return trace
