"""Reasoning coordination plane: sync FSM, absence handling, anomaly monitor.

The coordination plane decides what a slot's silence means, keeps the two
counterpart models from drifting apart via periodic digest checks and
resync exchanges, and watches the surprise stream for observation/model
mismatch. Only the agentic paradigm runs any of this; classical and
semantic stay pure data-plane by design so cross-paradigm comparisons are
not contaminated.

Sync exchange (one initiator per digest period, alternating):

    initiator                         responder
    DIGEST(own belief) ------------->  compare vs est of initiator
      AWAIT_DIGEST                     match: confirm, stay IDLE
                                       mismatch: RESYNC(own belief) -->
                                         RESYNCING (retries, capped)
    on RESYNC: adopt payload,
      reply RESYNC(own belief) ------>  adopt payload, IDLE
      IDLE
    window expiry with no RESYNC: implicit match, IDLE

A responder whose retries run out escalates to a hard reset, the same
path the anomaly monitor takes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field


class Mode(enum.Enum):
    CLASSICAL = "classical"
    SEMANTIC = "semantic"
    AGENTIC = "agentic"
    NONE = "none"  # internal no-communication baseline for impact-per-bit pairing


class SyncFsm(enum.Enum):
    IDLE = "idle"
    AWAIT_DIGEST = "await_digest"
    RESYNCING = "resyncing"


# The only legal FSM moves; enforced at every transition.
_ALLOWED_TRANSITIONS = {
    (SyncFsm.IDLE, SyncFsm.AWAIT_DIGEST),
    (SyncFsm.AWAIT_DIGEST, SyncFsm.IDLE),
    (SyncFsm.AWAIT_DIGEST, SyncFsm.RESYNCING),
    (SyncFsm.IDLE, SyncFsm.RESYNCING),
    (SyncFsm.RESYNCING, SyncFsm.IDLE),
}


class Absence(enum.Enum):
    SILENCE_INFORMATIVE = "silence_informative"
    AMBIGUOUS = "ambiguous"


class OodDecision(enum.Enum):
    OK = "ok"
    HARD_RESET = "hard_reset"


class Validation(enum.Enum):
    SAFE = "safe"
    CONFLICT = "conflict"


MAX_RESYNC_ATTEMPTS = 5
AMBIGUITY_INFLATION = 0.05
# Remixed into a silence-conditioned belief so excluded values are not
# pinned at exactly zero and fresh evidence can still move the agent.
SILENCE_POSTMIX = 0.1


@dataclass
class SyncConfig:
    heartbeat_period: int = 20
    digest_period: int = 50
    ood_threshold_sigmas: float = 3.0
    ood_ewma_alpha: float = 0.1
    warmup_slots: int = 100

    def __post_init__(self):
        if self.heartbeat_period < 1 or self.digest_period < 1 or self.warmup_slots < 1:
            raise ValueError("sync periods must be >= 1")


RESET_REFRACTORY_SLOTS = 20
QUARANTINE_RESET_COUNT = 3
QUARANTINE_RESET_WINDOW = 200
# Absolute slack under the sigma threshold: guards against a warmup that
# happened to be unusually calm making the monitor hair-triggered.
OOD_MIN_SLACK = 0.35
QUARANTINE_PROBATION_SLOTS = 100


@dataclass
class OodState:
    """EWMA surprise tracker with warmup-calibrated threshold.

    Warmup statistics describe the healthy regime and are kept for the
    rest of the episode; a hard reset only clears the EWMA and imposes a
    short refractory window, so a persistent anomaly re-trips quickly
    while an isolated false alarm cannot storm.
    """

    ewma: float = 0.0
    initialized: bool = False
    armed: bool = False
    mean: float = 0.0
    std: float = 0.0
    warmup_count: int = 0
    _wsum: float = 0.0
    _wsumsq: float = 0.0
    quarantined: bool = False
    quarantined_since: int = 0
    refractory_until: int = 0
    threshold_reset_slots: list = field(default_factory=list)

    def observe(self, surprise_value: float, cfg: SyncConfig) -> None:
        alpha = cfg.ood_ewma_alpha
        if not self.initialized:
            self.ewma = surprise_value
            self.initialized = True
        else:
            self.ewma = (1.0 - alpha) * self.ewma + alpha * surprise_value
        if not self.armed:
            self.warmup_count += 1
            self._wsum += self.ewma
            self._wsumsq += self.ewma * self.ewma
            if self.warmup_count >= cfg.warmup_slots:
                n = self.warmup_count
                self.mean = self._wsum / n
                var = max(self._wsumsq / n - self.mean * self.mean, 0.0)
                self.std = math.sqrt(var)
                self.armed = True

    def threshold(self, sync_cfg: SyncConfig) -> float:
        return self.mean + max(sync_cfg.ood_threshold_sigmas * self.std, OOD_MIN_SLACK)

    def after_reset(self, slot: int, threshold_triggered: bool) -> None:
        self.initialized = False
        self.ewma = 0.0
        self.refractory_until = slot + RESET_REFRACTORY_SLOTS
        if threshold_triggered:
            self.threshold_reset_slots.append(slot)

    def persistent_anomaly(self, slot: int) -> bool:
        recent = [s for s in self.threshold_reset_slots if slot - s <= QUARANTINE_RESET_WINDOW]
        return len(recent) >= QUARANTINE_RESET_COUNT

    def quarantine(self, slot: int) -> None:
        self.quarantined = True
        self.quarantined_since = slot

    def maybe_release(self, slot: int) -> None:
        """Lift the quarantine once the sensor behaves again on probation.

        While quarantined the belief is driven by the peer, so a healthy
        sensor produces ordinary surprise and the EWMA settles back under
        the arming-time mean; a genuinely mismatched sensor keeps it high.
        """
        if not self.quarantined:
            return
        if slot - self.quarantined_since < QUARANTINE_PROBATION_SLOTS:
            return
        if self.ewma <= self.mean + self.std:
            self.quarantined = False
            self.threshold_reset_slots.clear()


@dataclass
class SendIntent:
    """A coordination frame the FSM wants emitted on the next send phase."""

    kind: str  # "digest" | "resync" | "policy_digest" | "policy_resync"
    reset: bool = False
    reply: bool = False  # replies must never trigger further replies


@dataclass
class CoordState:
    mode: Mode
    sync_fsm: SyncFsm = SyncFsm.IDLE
    next_expected_seq: int = 0
    gap_flag: bool = False
    slots_since_heartbeat: int = 0
    slots_since_last_send: int = 0
    ood: OodState = field(default_factory=OodState)
    # Sync exchange bookkeeping.
    await_deadline: int | None = None
    resync_attempts: int = 0
    next_retry_slot: int | None = None
    escalate: bool = False
    outbox: list = field(default_factory=list)
    # Event log consumed by traces and the model checker.
    events: list = field(default_factory=list)
    # Data-plane memory for the semantic change trigger.
    last_sent_emission: dict = field(default_factory=dict)
    policy_pull_pending: bool = False
    peer_quarantined: bool = False

    def transition(self, target: SyncFsm) -> None:
        if target == self.sync_fsm:
            return
        if (self.sync_fsm, target) not in _ALLOWED_TRANSITIONS:
            raise AssertionError(f"illegal sync transition {self.sync_fsm} -> {target}")
        self.sync_fsm = target


def response_window(latency: int) -> int:
    return 4 + 2 * latency


def retry_interval(latency: int) -> int:
    return 1 + latency


def interpret_absence(coord: CoordState, slot: int, sync_cfg: SyncConfig) -> Absence:
    """Decide whether a frame-free slot is meaningful silence or an outage artifact."""
    if coord.gap_flag or coord.slots_since_heartbeat > 2 * sync_cfg.heartbeat_period:
        return Absence.AMBIGUOUS
    return Absence.SILENCE_INFORMATIVE


def inflate_uncertainty(vec, rho: float = AMBIGUITY_INFLATION) -> tuple[float, ...]:
    n = len(vec)
    return tuple((1.0 - rho) * p + rho / n for p in vec)


def sync_poll_send(coord: CoordState, slot: int, sync_cfg: SyncConfig, latency: int,
                   initiator: bool) -> list[SendIntent]:
    """Periodic digest initiation, retransmissions, and deadline handling."""
    intents: list[SendIntent] = []
    if coord.mode != Mode.AGENTIC:
        return intents

    if coord.sync_fsm == SyncFsm.AWAIT_DIGEST and slot >= (coord.await_deadline or 0):
        # No objection inside the window: implicit match.
        coord.transition(SyncFsm.IDLE)
        coord.await_deadline = None
        coord.gap_flag = False
        coord.events.append((slot, "match_implicit"))

    if coord.sync_fsm == SyncFsm.RESYNCING and coord.next_retry_slot is not None:
        if slot >= coord.next_retry_slot:
            if coord.resync_attempts >= MAX_RESYNC_ATTEMPTS:
                coord.escalate = True
                coord.events.append((slot, "resync_exhausted"))
                coord.transition(SyncFsm.IDLE)
                coord.next_retry_slot = None
            else:
                intents.append(SendIntent("resync"))
                coord.resync_attempts += 1
                coord.next_retry_slot = slot + retry_interval(latency)
                coord.events.append((slot, "resync_retry"))

    if (
        initiator
        and slot > 0
        and slot % sync_cfg.digest_period == 0
        and coord.sync_fsm == SyncFsm.IDLE
    ):
        intents.append(SendIntent("digest"))
        coord.transition(SyncFsm.AWAIT_DIGEST)
        coord.await_deadline = slot + response_window(latency)
        coord.events.append((slot, "digest_initiated"))

    intents.extend(coord.outbox)
    coord.outbox.clear()
    return intents


def sync_on_digest(coord: CoordState, slot: int, matched: bool, latency: int) -> None:
    """Responder side of the periodic alignment check."""
    if matched:
        coord.gap_flag = False
        coord.events.append((slot, "match"))
        return
    coord.events.append((slot, "mismatch"))
    if coord.sync_fsm == SyncFsm.IDLE:
        coord.transition(SyncFsm.RESYNCING)
        coord.outbox.append(SendIntent("resync"))
        coord.resync_attempts = 1
        coord.next_retry_slot = slot + 1 + retry_interval(latency)


def sync_on_resync(coord: CoordState, slot: int, is_reply: bool) -> bool:
    """Handle an arriving resync; returns True when a reply must be sent.

    The caller has already adopted the payload into its counterpart model.
    Replies never trigger further replies, so duplicate retransmissions are
    absorbed instead of cascading.
    """
    coord.gap_flag = False
    if is_reply:
        if coord.sync_fsm == SyncFsm.RESYNCING:
            coord.transition(SyncFsm.IDLE)
            coord.next_retry_slot = None
            coord.resync_attempts = 0
            coord.events.append((slot, "match_resynced"))
        return False
    if coord.sync_fsm == SyncFsm.AWAIT_DIGEST:
        # Mismatch report against our digest: adopt, push our side back, done.
        coord.transition(SyncFsm.RESYNCING)
        coord.transition(SyncFsm.IDLE)
        coord.await_deadline = None
        coord.events.append((slot, "match_resynced"))
        return True
    coord.events.append((slot, "resync_unsolicited"))
    return True


def ood_monitor(coord: CoordState, sync_cfg: SyncConfig, silence_contradiction: bool,
                slot: int = 0) -> OodDecision:
    """Threshold test on the surprise EWMA plus the impossible-silence trigger.

    Only meaningful once warmup statistics exist and outside the
    post-reset refractory window, so a reset cannot storm itself.
    """
    state = coord.ood
    if not state.armed or slot < state.refractory_until:
        return OodDecision.OK
    if silence_contradiction:
        return OodDecision.HARD_RESET
    if state.ewma > state.threshold(sync_cfg):
        return OodDecision.HARD_RESET
    return OodDecision.OK


def predictive_validate(own_action: str, predicted_peer_action: str, own_belief_marginal,
                        compat, sender_is_leader: bool) -> Validation:
    """Simulate the joint action at the most likely world value."""
    w_star = 0
    for i in range(1, len(own_belief_marginal)):
        if own_belief_marginal[i] > own_belief_marginal[w_star]:
            w_star = i
    if sender_is_leader:
        ok = compat.success(w_star, own_action, predicted_peer_action)
    else:
        ok = compat.success(w_star, predicted_peer_action, own_action)
    return Validation.SAFE if ok else Validation.CONFLICT
