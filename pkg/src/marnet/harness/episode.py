"""Deterministic episode execution.

Slot pipeline (order is part of the determinism contract):

  A. world transition, then one observation draw per agent (world stream)
  B. per agent: time-diffuse own belief and both counterpart estimates,
     score surprise, condition on the observation, mirror the peer's
     expected observation into the estimates
  C. send phase: paradigm dispatch plus coordination frames; every sent
     frame is mirrored optimistically into the sender's estimates
     (channel streams, one loss draw per frame)
  D. delivery of frames due this slot
  E. receive phase: sequence-gap bookkeeping, evidence conditioning,
     digest/resync handling; frame-free slots are interpreted as
     informative silence or ambiguity (agentic only)
  F. act: policy lookup on own belief; joint outcome against the
     compatibility matrix
  G. post: action-consistency confirmation, anomaly monitor, hard resets,
     policy drift (drift stream), scheduled observation-model injection
  H. record

Agents are processed in index order within every phase, and all draws
come from named substreams of the master seed, so changing one schedule
leaves the other streams bit-identical.

Belief bookkeeping per agent (agentic mode):

  belief   what I believe about the world
  est      what I think the peer believes (CounterpartModel)
  mirror   what I think the peer thinks I believe (second order)

The mirror is maintained from events both ends can see (sent tokens,
silence, resync payloads, my own actions against my last-announced
policy), which is what makes silence interpretable: the receiver
reconstructs the sender's gating against the mirror rather than against
its own private belief, so healthy disagreement does not masquerade as
an impossible-silence anomaly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import belief as bl
from .. import channel as ch
from .. import coordination as co
from .. import kpi
from .. import rbe
from .. import scenario as sc
from ..ontology import Digest, DigestKind, make_digest, serialize_quantized_cells
from ..rng import substream
from .config import FORMAT_VERSION, RunConfig

_FSM_INDEX = {co.SyncFsm.IDLE: 0, co.SyncFsm.AWAIT_DIGEST: 1, co.SyncFsm.RESYNCING: 2}


@dataclass
class _BeliefDigestPayload:
    digest: Digest


@dataclass
class _PolicyDigestPayload:
    digest: Digest
    subject: int


@dataclass
class _ResyncPayload:
    cells: tuple[int, ...]
    reset: bool = False
    reply: bool = False
    sender_quarantined: bool = False


@dataclass
class _PolicyResyncPayload:
    actions: tuple[str, ...]  # canonical bucket order
    version: int
    subject: int


@dataclass
class _AgentRuntime:
    index: int
    spec: sc.AgentSpec
    policy: sc.PolicyTable
    belief: bl.BeliefState
    cm: rbe.CounterpartModel
    coord: co.CoordState
    mirror: bl.BeliefState | None = None
    announced_policy: sc.PolicyTable | None = None
    seq: int = 0
    mirror_pre: bl.BeliefState | None = None
    mirror_decision: bl.BeliefState | None = None
    est_pre: bl.BeliefState | None = None
    obs: bl.Evidence | None = None
    surprise: float = 0.0
    decision: rbe.MessageDecision | None = None
    silence_pred: bl.BeliefState | None = None
    contradiction: bool = False
    frames_sent: list = field(default_factory=list)
    frames_delivered: list = field(default_factory=list)
    ambiguous: bool = False
    silence_applied: bool = False
    hard_reset: bool = False
    reset_outstanding: bool = False
    reset_retry_slot: int = 0
    pending_policy_push: bool = False

    def set_est(self, est: bl.BeliefState, confirmed: int | None = None) -> None:
        self.cm = rbe.CounterpartModel(
            est,
            self.cm.policy_snapshot,
            self.cm.depth,
            self.cm.last_confirmed_step if confirmed is None else confirmed,
        )


# Observation branches with predictive weight below this are dropped from
# the expected-posterior estimate: a rare contrary emission of a sharp
# sensor would otherwise bleed a near-flip into the mixture every slot.
_MIXTURE_BRANCH_FLOOR = 0.15


def _mixture_observation_update(
    est: bl.BeliefState, weights_belief: bl.BeliefState, var_id: int, row_matrix
) -> bl.BeliefState:
    """Expected-posterior update: marginalize an unseen observation.

    Branch weights come from the modeler's best belief pushed through the
    observer's sensor model; implausible branches and branches the
    estimate rules out are dropped and the rest renormalized.
    Accumulation order: emissions ascending, values ascending.
    """
    prior = est.vector(var_id)
    own = weights_belief.vector(var_id)
    arity = len(prior)
    branches = []
    total_weight = 0.0
    for e in range(arity):
        w = 0.0
        row = row_matrix[e]
        for s in range(arity):
            w += own[s] * row[s]
        if w < _MIXTURE_BRANCH_FLOOR:
            continue
        post = [prior[s] * row[s] for s in range(arity)]
        mass = 0.0
        for p in post:
            mass += p
        if mass <= 0.0 or w <= 0.0:
            continue
        branches.append((w, [p / mass for p in post]))
        total_weight += w
    if not branches or total_weight <= 0.0:
        return est
    mixed = [0.0] * arity
    for w, post in branches:
        share = w / total_weight
        for s in range(arity):
            mixed[s] += share * post[s]
    return est.replace_vector(var_id, mixed, est.step_stamp + 1)


def _apply_token(belief: bl.BeliefState, token, lm) -> tuple[bl.BeliefState, bool]:
    evid = bl.Evidence(
        bl.EvidenceKind.TOKEN, token.target_variable, token.asserted_value,
        token.likelihood_row_id,
    )
    try:
        return bl.update_belief(belief, evid, lm), False
    except bl.DegenerateEvidenceError:
        return belief, True


class Episode:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.bundle = sc.build_scenario(cfg.scenario)
        bundle = self.bundle
        self.mode = cfg.paradigm
        self.world = bundle.world()
        self.world_rng = substream(cfg.seed, "world")
        self.drift_rng = substream(cfg.seed, "drift")
        self.ood_rng = substream(cfg.seed, "ood")  # reserved for randomized injections
        self.channels = {
            (0, 1): ch.Channel(cfg.channel, substream(cfg.seed, "channel:0>1")),
            (1, 0): ch.Channel(cfg.channel, substream(cfg.seed, "channel:1>0")),
        }
        self.gate = rbe.GatingContext(
            ontology=bundle.ontology,
            likelihoods=bundle.likelihoods,
            compat=bundle.compat,
            observed_variables=tuple(a.observed_variable for a in bundle.agents),
            sensor_rows=tuple(a.sensor_row for a in bundle.agents),
            compat_variable=bundle.compat_variable,
            lambda_bits=cfg.lambda_bits,
        )
        arities = bundle.arities()
        agentic = self.mode == co.Mode.AGENTIC
        self.agents = []
        for i, spec in enumerate(bundle.agents):
            peer = 1 - i
            cm = rbe.CounterpartModel(
                est_belief=bl.uniform_belief(arities),
                policy_snapshot=bundle.policies[peer],
                depth=cfg.depth,
            )
            self.agents.append(
                _AgentRuntime(
                    index=i,
                    spec=spec,
                    policy=bundle.policies[i],
                    belief=bl.uniform_belief(arities),
                    cm=cm,
                    coord=co.CoordState(mode=self.mode),
                    mirror=bl.uniform_belief(arities) if agentic else None,
                    announced_policy=bundle.policies[i],
                )
            )
        self.records: list[kpi.StepRecord] = []
        self.decision_logs: list = []

    # -- helpers -----------------------------------------------------------

    def _belief_digest(self, b: bl.BeliefState) -> Digest:
        return make_digest(DigestKind.BELIEF, serialize_quantized_cells(bl.quantize(b)))

    def _emit(self, agent: _AgentRuntime, slot: int, kind: ch.FrameKind, size_bits: int, payload):
        frame = ch.Frame(kind, agent.index, agent.seq, size_bits, slot, payload)
        agent.seq += 1
        self.channels[(agent.index, 1 - agent.index)].transmit(frame)
        agent.frames_sent.append(kpi.FrameInfo(int(kind), size_bits, frame.seq))
        agent.coord.slots_since_last_send = 0
        return frame

    def _conditioning_view(self, agent: _AgentRuntime, depth: int) -> rbe.SenderView:
        """View of the silent peer, grounded in mirrored (shared) state."""
        peer = self.agents[1 - agent.index]
        return rbe.SenderView(
            sender_index=peer.index,
            est_sender_belief=agent.est_pre,
            sender_policy=agent.cm.policy_snapshot,
            receiver_belief=agent.mirror_decision,
            receiver_policy=agent.announced_policy,
            depth=depth,
        )

    def _postmix(self, belief: bl.BeliefState, var: int) -> bl.BeliefState:
        vec = co.inflate_uncertainty(belief.vector(var), co.SILENCE_POSTMIX)
        return belief.replace_vector(var, vec, belief.step_stamp)

    def _apply_hard_reset(
        self, agent: _AgentRuntime, slot: int, threshold_triggered: bool
    ) -> None:
        arities = self.bundle.arities()
        agent.belief = bl.uniform_belief(arities, agent.belief.step_stamp + 1)
        agent.set_est(bl.uniform_belief(arities), confirmed=slot)
        agent.mirror = bl.uniform_belief(arities)
        agent.coord.gap_flag = False
        agent.coord.ood.after_reset(slot, threshold_triggered)
        if agent.coord.ood.persistent_anomaly(slot):
            # The sensor keeps contradicting the shared picture: stop
            # conditioning on it and lean on the peer's transmissions.
            agent.coord.ood.quarantine(slot)
        agent.hard_reset = True
        if agent.coord.sync_fsm != co.SyncFsm.IDLE:
            agent.coord.transition(co.SyncFsm.IDLE)
        agent.coord.await_deadline = None
        agent.coord.next_retry_slot = None
        agent.coord.resync_attempts = 0
        agent.reset_outstanding = True
        agent.reset_retry_slot = slot + 1
        agent.coord.outbox.append(co.SendIntent("policy_digest"))

    def _send_belief_resync(
        self, agent: _AgentRuntime, slot: int, reset: bool = False, reply: bool = False
    ) -> None:
        cells = bl.quantize(agent.belief)
        payload = _ResyncPayload(
            cells,
            reset=reset,
            reply=reply,
            sender_quarantined=agent.coord.ood.quarantined,
        )
        self._emit(agent, slot, ch.FrameKind.RESYNC, ch.resync_bits(len(cells)), payload)
        # The peer adopts the payload as its estimate of us; so does the mirror.
        agent.mirror = bl.dequantize(cells, self.bundle.arities())
        if agent.policy.version > agent.announced_policy.version:
            self._send_policy_resync(agent, slot)

    def _send_policy_resync(self, agent: _AgentRuntime, slot: int) -> None:
        actions = tuple(
            agent.policy.mapping[bucket] for bucket in sc.bucket_order(agent.policy.arity)
        )
        payload = _PolicyResyncPayload(actions, agent.policy.version, agent.index)
        bits = ch.policy_resync_bits(len(actions))
        self._emit(agent, slot, ch.FrameKind.RESYNC, bits, payload)
        agent.announced_policy = agent.policy

    # -- slot phases -------------------------------------------------------

    def _phase_world(self, slot: int):
        self.world.step(self.world_rng)
        for agent in self.agents:
            agent.obs = self.bundle.draw_observation(agent.index, self.world.value, self.world_rng)

    def _phase_sense(self, slot: int):
        transitions = self.bundle.transitions
        lm = self.bundle.likelihoods
        agentic = self.mode == co.Mode.AGENTIC
        for agent in self.agents:
            agent.frames_sent = []
            agent.frames_delivered = []
            agent.ambiguous = False
            agent.silence_applied = False
            agent.hard_reset = False
            agent.contradiction = False
            agent.decision = None
            agent.silence_pred = None
            agent.coord.slots_since_heartbeat += 1
            agent.coord.slots_since_last_send += 1

            b_pre = sc.diffuse_belief(agent.belief, transitions)
            est_pre = sc.diffuse_belief(agent.cm.est_belief, transitions)
            agent.est_pre = est_pre

            agent.surprise = bl.surprise(b_pre, agent.obs, lm)
            if agentic:
                # Quarantined sensors stay monitored (the belief is
                # peer-driven then, so the EWMA doubles as the probation
                # signal) but their statistics are already calibrated.
                agent.coord.ood.observe(agent.surprise, self.cfg.sync)

            if agent.coord.ood.quarantined:
                agent.belief = b_pre
            else:
                agent.belief = bl.update_belief(b_pre, agent.obs, lm)

            peer = self.agents[1 - agent.index]
            if agent.coord.peer_quarantined:
                est = est_pre
            else:
                peer_row = lm.rows[peer.spec.sensor_row]
                est = _mixture_observation_update(
                    est_pre, agent.belief, peer.spec.observed_variable, peer_row
                )
            agent.set_est(est)

            if agentic:
                mirror_pre = sc.diffuse_belief(agent.mirror, transitions)
                agent.mirror_pre = mirror_pre
                if agent.coord.ood.quarantined:
                    agent.mirror = mirror_pre
                else:
                    own_row = lm.rows[agent.spec.sensor_row]
                    agent.mirror = _mixture_observation_update(
                        mirror_pre, agent.cm.est_belief, agent.spec.observed_variable, own_row
                    )
                # The peer decides this slot's message before seeing anything
                # we send in it; silence reconstruction must use this
                # decision-time snapshot, not a mirror that has already
                # absorbed our own token.
                agent.mirror_decision = agent.mirror

    def _phase_send(self, slot: int):
        cfg = self.cfg
        lm = self.bundle.likelihoods
        for agent in self.agents:
            mode = self.mode
            if mode == co.Mode.NONE:
                continue
            sent_evidence = None
            sent_token = None
            if mode == co.Mode.CLASSICAL:
                payload = ch.classical_encode(agent.obs.emitted_value, cfg.channel)
                bits = ch.classical_frame_bits(cfg.channel)
                self._emit(
                    agent, slot, ch.FrameKind.RAW,
                    bits, (agent.spec.observed_variable, payload),
                )
                sent_evidence = bl.Evidence(
                    bl.EvidenceKind.RAW,
                    agent.spec.observed_variable,
                    agent.obs.emitted_value,
                    self.bundle.raw_row_id,
                )
            elif mode == co.Mode.SEMANTIC:
                var = agent.spec.observed_variable
                emitted = agent.obs.emitted_value
                if agent.coord.last_sent_emission.get(var) != emitted:
                    for tok in self.bundle.ontology.tokens_for_variable(var):
                        if (
                            tok.likelihood_row_id == agent.spec.sensor_row
                            and tok.asserted_value == emitted
                        ):
                            sent_token = tok
                            break
                    if sent_token is not None:
                        self._emit(
                            agent, slot, ch.FrameKind.TOKEN, sent_token.size_bits, sent_token
                        )
                        agent.coord.last_sent_emission[var] = emitted
                        sent_evidence = bl.Evidence(
                            bl.EvidenceKind.TOKEN, var, sent_token.asserted_value,
                            sent_token.likelihood_row_id,
                        )
            elif mode == co.Mode.AGENTIC:
                prepared = self.gate.predict_candidate_receiver_actions(
                    sender_index=agent.index,
                    receiver_belief=agent.cm.est_belief,
                    receiver_policy=agent.cm.policy_snapshot,
                    self_model_belief=agent.mirror_pre,
                    sender_policy=agent.announced_policy,
                    tau=cfg.tau,
                    depth=agent.cm.depth,
                    observed_variable=agent.spec.observed_variable,
                )
                decision = self.gate.decide_from_candidates(
                    agent.index, agent.belief, agent.policy, prepared, cfg.tau
                )
                agent.decision = decision
                agent.silence_pred = prepared[0][1]
                if decision.choice is not None:
                    sent_token = decision.choice
                    self._emit(
                        agent, slot, ch.FrameKind.TOKEN, sent_token.size_bits, sent_token
                    )
                    sent_evidence = bl.Evidence(
                        bl.EvidenceKind.TOKEN, sent_token.target_variable,
                        sent_token.asserted_value, sent_token.likelihood_row_id,
                    )
                self.decision_logs.append(
                    {
                        "slot": slot,
                        "agent": agent.index,
                        "choice": "SILENCE" if decision.choice is None
                        else f"token:{decision.choice.concept_id}",
                        "forced": decision.forced,
                        "candidates": [list(entry) for entry in decision.candidate_log],
                    }
                )

                initiator = slot > 0 and slot % cfg.sync.digest_period == 0 and (
                    (slot // cfg.sync.digest_period) % 2 == agent.index
                )
                intents = co.sync_poll_send(
                    agent.coord, slot, cfg.sync, cfg.channel.latency_slots, initiator
                )
                if agent.reset_outstanding and slot >= agent.reset_retry_slot:
                    intents.append(co.SendIntent("resync", reset=True))
                    agent.reset_retry_slot = slot + co.retry_interval(cfg.channel.latency_slots)
                for intent in intents:
                    if intent.kind == "digest":
                        digest = self._belief_digest(agent.belief)
                        self._emit(
                            agent, slot, ch.FrameKind.DIGEST, ch.DIGEST_BITS,
                            _BeliefDigestPayload(digest),
                        )
                    elif intent.kind == "resync":
                        self._send_belief_resync(
                            agent, slot, reset=intent.reset, reply=intent.reply
                        )
                    elif intent.kind == "policy_digest":
                        pd = agent.policy.digest()
                        self._emit(
                            agent, slot, ch.FrameKind.DIGEST, ch.DIGEST_BITS,
                            _PolicyDigestPayload(pd, agent.index),
                        )
                    elif intent.kind == "policy_resync":
                        self._send_policy_resync(agent, slot)
                if agent.pending_policy_push:
                    self._send_policy_resync(agent, slot)
                    agent.pending_policy_push = False
                if (
                    not agent.frames_sent
                    and agent.coord.slots_since_last_send >= cfg.sync.heartbeat_period
                ):
                    self._emit(agent, slot, ch.FrameKind.HEARTBEAT, ch.HEARTBEAT_BITS, None)

            # Optimistic sender-side mirrors of what the peer will do with
            # this slot: its belief update (est) and its update of the
            # estimate it keeps of us (mirror).
            if sent_evidence is not None:
                try:
                    agent.set_est(bl.update_belief(agent.cm.est_belief, sent_evidence, lm))
                except bl.DegenerateEvidenceError:
                    pass
                if mode == co.Mode.AGENTIC and sent_token is not None:
                    agent.mirror, _ = _apply_token(agent.mirror, sent_token, lm)
            elif mode == co.Mode.AGENTIC and agent.decision is not None:
                # The peer will condition on our silence at its own full
                # depth and then remix; replicate that transform on our
                # estimate of it. (The depth-truncated silence prediction
                # inside the decision is the gating approximation; state
                # maintenance replicates the real computation.)
                proxy_view = rbe.SenderView(
                    sender_index=agent.index,
                    est_sender_belief=agent.mirror_pre,
                    sender_policy=agent.announced_policy,
                    receiver_belief=agent.cm.est_belief,
                    receiver_policy=agent.cm.policy_snapshot,
                    depth=cfg.depth,
                )
                var = agent.spec.observed_variable
                indicator = self.gate.silence_indicator(proxy_view, cfg.tau)
                conditioned, zero = bl.condition_on_indicator(
                    agent.cm.est_belief, var, indicator
                )
                if not zero:
                    agent.set_est(self._postmix(conditioned, var))

    def _phase_receive(self, slot: int):
        cfg = self.cfg
        lm = self.bundle.likelihoods
        agentic = self.mode == co.Mode.AGENTIC
        for agent in self.agents:
            peer_index = 1 - agent.index
            frames = self.channels[(peer_index, agent.index)].deliver(slot)
            belief_bearing = False
            for frame in frames:
                agent.frames_delivered.append(
                    kpi.FrameInfo(int(frame.kind), frame.size_bits, frame.seq)
                )
                agent.coord.slots_since_heartbeat = 0
                if frame.seq > agent.coord.next_expected_seq:
                    agent.coord.gap_flag = True
                agent.coord.next_expected_seq = max(
                    agent.coord.next_expected_seq, frame.seq + 1
                )

                if frame.kind == ch.FrameKind.TOKEN:
                    belief_bearing = True
                    token = frame.payload
                    agent.belief, degenerate = _apply_token(agent.belief, token, lm)
                    if degenerate:
                        agent.contradiction = True
                    # The token also reveals the sender's state: fold it into
                    # the estimate of the sender exactly as the sender did.
                    est, _ = _apply_token(agent.cm.est_belief, token, lm)
                    agent.set_est(est)
                    if agentic:
                        # The sender folded this token into its estimate of
                        # us; keep the second-order mirror glued to that.
                        agent.mirror, _ = _apply_token(agent.mirror, token, lm)
                elif frame.kind == ch.FrameKind.RAW:
                    belief_bearing = True
                    var, payload = frame.payload
                    data = payload
                    if cfg.channel.ber > 0.0:
                        data = ch.corrupt_raw(
                            data, cfg.channel.ber, self.channels[(peer_index, agent.index)].rng
                        )
                    value = ch.classical_decode(
                        data, self.bundle.schema.arity(var), cfg.channel
                    )
                    evid = bl.Evidence(bl.EvidenceKind.RAW, var, value, self.bundle.raw_row_id)
                    try:
                        agent.belief = bl.update_belief(agent.belief, evid, lm)
                    except bl.DegenerateEvidenceError:
                        agent.contradiction = True
                    sender_row = self.agents[peer_index].spec.sensor_row
                    mirror_evid = bl.Evidence(bl.EvidenceKind.RAW, var, value, sender_row)
                    try:
                        agent.set_est(bl.update_belief(agent.cm.est_belief, mirror_evid, lm))
                    except bl.DegenerateEvidenceError:
                        pass
                elif frame.kind == ch.FrameKind.DIGEST and agentic:
                    payload = frame.payload
                    if isinstance(payload, _BeliefDigestPayload):
                        local = self._belief_digest(agent.cm.est_belief)
                        matched = local.hash == payload.digest.hash
                        co.sync_on_digest(
                            agent.coord, slot, matched, cfg.channel.latency_slots
                        )
                        if matched:
                            agent.cm = rbe.confirm(agent.cm, slot, digest_match=True)
                    else:
                        snapshot_digest = agent.cm.policy_snapshot.digest()
                        if (
                            payload.digest.version != snapshot_digest.version
                            or payload.digest.hash != snapshot_digest.hash
                        ):
                            agent.coord.outbox.append(co.SendIntent("policy_digest"))
                        if payload.subject == agent.index:
                            agent.pending_policy_push = True
                elif frame.kind == ch.FrameKind.RESYNC and agentic:
                    payload = frame.payload
                    if isinstance(payload, _PolicyResyncPayload):
                        buckets = sc.bucket_order(agent.cm.policy_snapshot.arity)
                        mapping = dict(zip(buckets, payload.actions))
                        snapshot = sc.PolicyTable(
                            agent.cm.policy_snapshot.policy_variable,
                            agent.cm.policy_snapshot.arity,
                            mapping,
                            payload.version,
                            agent.cm.policy_snapshot.agent_role,
                        )
                        agent.cm = rbe.CounterpartModel(
                            agent.cm.est_belief, snapshot, agent.cm.depth, slot
                        )
                    else:
                        est = bl.dequantize(payload.cells, self.bundle.arities())
                        agent.cm = rbe.confirm(agent.cm, slot, resync_belief=est)
                        if payload.sender_quarantined:
                            agent.coord.peer_quarantined = True
                        if payload.reset:
                            # The peer rebuilt itself from scratch; its view
                            # of us went uniform with it.
                            agent.mirror = bl.uniform_belief(self.bundle.arities())
                        if agent.reset_outstanding:
                            agent.reset_outstanding = False
                        if co.sync_on_resync(agent.coord, slot, payload.reply):
                            agent.coord.outbox.append(co.SendIntent("resync", reply=True))

            if agentic and not belief_bearing:
                absence = co.interpret_absence(agent.coord, slot, cfg.sync)
                var = self.agents[peer_index].spec.observed_variable
                if absence == co.Absence.AMBIGUOUS:
                    agent.ambiguous = True
                    vec = co.inflate_uncertainty(agent.belief.vector(var))
                    agent.belief = agent.belief.replace_vector(
                        var, vec, agent.belief.step_stamp + 1
                    )
                else:
                    # One indicator serves both the belief conditioning and
                    # the mirror replication: the view only references the
                    # mirrored pair, never the private belief.
                    view = self._conditioning_view(agent, self.cfg.depth)
                    indicator = self.gate.silence_indicator(view, cfg.tau)
                    conditioned, contradiction = bl.condition_on_indicator(
                        agent.belief, var, indicator
                    )
                    agent.silence_applied = True
                    if contradiction:
                        agent.contradiction = True
                    else:
                        # Remix so excluded values keep a toehold; otherwise
                        # iterated conditioning pins the belief and later
                        # evidence cannot move it.
                        agent.belief = self._postmix(conditioned, var)
                    mirrored, zero = bl.condition_on_indicator(agent.mirror, var, indicator)
                    if not zero:
                        agent.mirror = self._postmix(mirrored, var)

    def _phase_act(self, slot: int):
        actions = [agent.policy.action_for(agent.belief) for agent in self.agents]
        success = sc.evaluate_joint(
            self.world.value, actions[0], actions[1], self.bundle.compat
        )
        if self.bundle.intersection is not None:
            self.bundle.intersection.apply_actions(actions)
        return actions, success

    def _phase_post(self, slot: int, actions):
        cfg = self.cfg
        if self.mode == co.Mode.AGENTIC:
            for agent in self.agents:
                peer_action = actions[1 - agent.index]
                agent.cm = rbe.confirm(agent.cm, slot, observed_action=peer_action)
                agent.mirror = rbe.project_to_action_consistency(
                    agent.mirror, agent.announced_policy, actions[agent.index]
                )
                if agent.coord.ood.quarantined:
                    agent.coord.ood.maybe_release(slot)
                    agent.coord.escalate = False
                    continue
                contradiction = agent.contradiction
                decision = co.ood_monitor(agent.coord, cfg.sync, contradiction, slot)
                if agent.coord.escalate:
                    decision = co.OodDecision.HARD_RESET
                    agent.coord.escalate = False
                if decision == co.OodDecision.HARD_RESET:
                    state = agent.coord.ood
                    threshold_hit = state.armed and state.ewma > state.threshold(cfg.sync)
                    self._apply_hard_reset(agent, slot, threshold_hit)

        if cfg.drift.p_drift > 0.0:
            for agent in self.agents:
                if agent.spec.role in cfg.drift.roles:
                    drifted = sc.drift_policy(agent.policy, self.drift_rng, cfg.drift.p_drift)
                    if drifted.version != agent.policy.version:
                        agent.policy = drifted
                        if self.mode == co.Mode.AGENTIC:
                            agent.pending_policy_push = True

    def _phase_record(self, slot: int, actions, success: bool):
        agent_records = []
        for agent in self.agents:
            agent_records.append(
                kpi.AgentSlotRecord(
                    belief_cells=bl.quantize(agent.belief),
                    est_peer_cells=bl.quantize(agent.cm.est_belief),
                    action=actions[agent.index],
                    frames_sent=tuple(agent.frames_sent),
                    frames_delivered=tuple(agent.frames_delivered),
                    ambiguous=agent.ambiguous,
                    silence_applied=agent.silence_applied,
                    hard_reset=agent.hard_reset,
                    fsm_state=_FSM_INDEX[agent.coord.sync_fsm],
                    surprise=agent.surprise,
                )
            )
        self.records.append(
            kpi.StepRecord(slot, self.world.value, success, tuple(agent_records))
        )

    def run(self) -> kpi.Trace:
        cfg = self.cfg
        for slot in range(cfg.horizon):
            if cfg.ood is not None and slot == cfg.ood.at_slot:
                self.bundle.inject_ood(cfg.ood.agent, *cfg.ood.swap_values)
            self._phase_world(slot)
            self._phase_sense(slot)
            self._phase_send(slot)
            self._phase_receive(slot)
            actions, success = self._phase_act(slot)
            self._phase_post(slot, actions)
            self._phase_record(slot, actions, success)
        trace = kpi.Trace(
            format_version=FORMAT_VERSION,
            config_hash=cfg.config_hash(),
            config=cfg.as_dict(),
            records=self.records,
        )
        return trace


def run_episode(cfg: RunConfig) -> tuple[kpi.Trace, kpi.KPIReport | None, list]:
    """Execute one episode; returns (trace, report, decision logs).

    The impact-per-bit baseline is a paired no-communication run on the
    same seed, executed automatically for any communicating paradigm. An
    empty horizon yields an empty trace and no report; KPI operations on
    an empty trace raise UndefinedInputError.
    """
    episode = Episode(cfg)
    trace = episode.run()
    if not trace.records:
        return trace, None, episode.decision_logs
    if cfg.paradigm == co.Mode.NONE:
        baseline = kpi.success_rate(trace)
    else:
        baseline_cfg = cfg.with_overrides(paradigm="none")
        baseline_trace = Episode(baseline_cfg).run()
        baseline = kpi.success_rate(baseline_trace)
    report = kpi.build_report(trace, baseline, cfg.eps_mbs)
    return trace, report, episode.decision_logs
