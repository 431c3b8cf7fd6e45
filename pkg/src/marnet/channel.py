"""Data delivery plane: slotted frame transport with loss, delay, and noise.

One Channel instance serves one direction of one agent pair. Every frame
costs exactly one loss draw from the channel's dedicated random substream;
bit-error corruption applies to raw payloads only (tokens and coordination
frames are assumed small enough to be fully protected by coding). Bit
accounting is exact: the sum of sent frame sizes is the overhead figure
the KPI module reports.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .rng import SplitMix64

HEARTBEAT_BITS = 16
DIGEST_BITS = 96
RESYNC_HEADER_BITS = 16
QUANT_CELL_BITS = 16
POLICY_BUCKET_BITS = 8
RAW_HEADER_BITS = 8


class FrameKind(enum.IntEnum):
    TOKEN = 0
    RAW = 1
    DIGEST = 2
    RESYNC = 3
    HEARTBEAT = 4


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    sender: int
    seq: int
    size_bits: int
    sent_slot: int
    payload: object = None


@dataclass
class ChannelConfig:
    p_loss: float = 0.0
    latency_slots: int = 0
    ber: float = 0.0
    raw_bits_per_observation: int = 128
    redundancy: int = 1
    coordination_shares_loss: bool = True

    def __post_init__(self):
        if not 0.0 <= self.p_loss <= 1.0 or not 0.0 <= self.ber <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.latency_slots < 0:
            raise ValueError("latency must be non-negative")


_COORDINATION_KINDS = (FrameKind.DIGEST, FrameKind.RESYNC, FrameKind.HEARTBEAT)


def send(frame: Frame, cfg: ChannelConfig, rng: SplitMix64) -> int | None:
    """One loss draw; returns the delivery slot or None for LOST."""
    lost = rng.bernoulli(cfg.p_loss)
    if lost and not cfg.coordination_shares_loss and frame.kind in _COORDINATION_KINDS:
        lost = False
    if lost:
        return None
    return frame.sent_slot + cfg.latency_slots


def corrupt_raw(payload: bytes, ber: float, rng: SplitMix64) -> bytes:
    """Flip each payload bit independently with probability ber.

    Implemented as a binomial draw for the flip count plus uniform distinct
    positions, which yields exactly the i.i.d. per-bit distribution with
    far fewer generator draws.
    """
    n_bits = len(payload) * 8
    if n_bits == 0:
        return payload
    k = rng.binomial(n_bits, ber)
    if k == 0:
        return payload
    positions = list(range(n_bits))
    data = bytearray(payload)
    for i in range(k):
        j = rng.randrange(len(positions))
        pos = positions.pop(j)
        data[pos // 8] ^= 1 << (pos % 8)
    return bytes(data)


def classical_frame_bits(cfg: ChannelConfig) -> int:
    return cfg.redundancy * cfg.raw_bits_per_observation + RAW_HEADER_BITS


def classical_encode(obs_value: int, cfg: ChannelConfig) -> bytes:
    """Fixed-width raw encoding: the value byte leads each redundant copy."""
    copy_bytes = cfg.raw_bits_per_observation // 8
    one_copy = bytes([obs_value]) + bytes(copy_bytes - 1)
    return one_copy * cfg.redundancy


def classical_decode(payload: bytes, arity: int, cfg: ChannelConfig) -> int:
    """Majority vote over redundant copies; a lone copy decodes its lead byte."""
    copy_bytes = cfg.raw_bits_per_observation // 8
    votes = [0] * arity
    for c in range(cfg.redundancy):
        votes[payload[c * copy_bytes] % arity] += 1
    best = 0
    for v in range(1, arity):
        if votes[v] > votes[best]:
            best = v
    return best


def resync_bits(n_cells: int) -> int:
    return RESYNC_HEADER_BITS + QUANT_CELL_BITS * n_cells


def policy_resync_bits(n_buckets: int) -> int:
    return RESYNC_HEADER_BITS + POLICY_BUCKET_BITS * n_buckets


@dataclass
class Channel:
    """Directed link with an in-flight queue and exact bit accounting."""

    cfg: ChannelConfig
    rng: SplitMix64
    in_flight: list = field(default_factory=list)
    sent_bits: int = 0
    sent_frames: int = 0
    lost_frames: int = 0

    def transmit(self, frame: Frame) -> int | None:
        self.sent_bits += frame.size_bits
        self.sent_frames += 1
        deliver_at = send(frame, self.cfg, self.rng)
        if deliver_at is None:
            self.lost_frames += 1
            return None
        self.in_flight.append((deliver_at, frame))
        return deliver_at

    def deliver(self, slot: int) -> list[Frame]:
        due = [f for (t, f) in self.in_flight if t <= slot]
        self.in_flight = [(t, f) for (t, f) in self.in_flight if t > slot]
        due.sort(key=lambda f: f.seq)
        return due
