"""Recursive counterpart modeling and message selection.

Each agent holds a CounterpartModel: an estimate of the peer's belief plus
a snapshot of the peer's policy. Before transmitting, the agent predicts
how each candidate message (including silence) would move the peer's
belief and action, scores the predicted joint action against the
compatibility matrix, and transmits only when silence would leave too much
predicted misalignment.

Recursion is capped at depth 2: the sender models a receiver who itself
interprets silence with a depth-1 model of the sender. Every computation
here is a pure function with a pinned accumulation order (world values
ascending, candidates in silence-then-concept_id order) so independent
reimplementations produce bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import belief as bl
from . import scenario as sc
from .errors import DegenerateEvidenceError
from .ontology import Digest, Ontology, Token

MAX_DEPTH = 2
DEFAULT_SAFETY_THRESHOLD = 0.5
# Emissions at least this likely under a hypothesis count as plausible when
# reconstructing a silent sender; silence is ruled out for a hypothesis only
# when every plausible emission would have produced a transmission.
PLAUSIBLE_EMISSION_FLOOR = 0.1


@dataclass(frozen=True)
class CounterpartModel:
    est_belief: bl.BeliefState
    policy_snapshot: sc.PolicyTable
    depth: int
    last_confirmed_step: int = -1

    def __post_init__(self):
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"counterpart depth must be in 1..{MAX_DEPTH}")


@dataclass(frozen=True)
class SenderView:
    """How a silent counterpart is modeled while interpreting its silence.

    est_sender_belief is the modeler's estimate of the silent agent's
    belief before this slot's observation; receiver_belief stands in for
    the silent agent's model of the interpreting side.
    """

    sender_index: int
    est_sender_belief: bl.BeliefState
    sender_policy: sc.PolicyTable
    receiver_belief: bl.BeliefState
    receiver_policy: sc.PolicyTable
    depth: int


@dataclass(frozen=True)
class MessageDecision:
    choice: Token | None  # None means deliberate silence
    predicted_misalignment: float
    utility: float
    silence_misalignment: float
    forced: bool
    candidate_log: tuple[tuple[str, float, float], ...]


def _argmax_lowest(values) -> int:
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


class GatingContext:
    """Shared, common-knowledge machinery behind every gating decision."""

    def __init__(
        self,
        ontology: Ontology,
        likelihoods: bl.LikelihoodModel,
        compat: sc.CompatibilityMatrix,
        observed_variables: tuple[int, int],
        sensor_rows: tuple[int, int],
        compat_variable: int,
        lambda_bits: float,
        safety_threshold: float = DEFAULT_SAFETY_THRESHOLD,
        leader_index: int = 0,
    ):
        self.ontology = ontology
        self.likelihoods = likelihoods
        self.compat = compat
        self.observed_variables = observed_variables
        self.sensor_rows = sensor_rows
        self.compat_variable = compat_variable
        self.lambda_bits = lambda_bits
        self.safety_threshold = safety_threshold
        self.leader_index = leader_index

    def observed_variable(self, view: SenderView) -> int:
        return self.observed_variables[view.sender_index]

    def oriented_pair(self, sender_index: int, a_sender: str, a_receiver: str):
        if sender_index == self.leader_index:
            return a_sender, a_receiver
        return a_receiver, a_sender

    def modal_emission(self, sender_index: int, hyp: int) -> int:
        matrix = self.likelihoods.rows[self.sensor_rows[sender_index]]
        return _argmax_lowest([matrix[v][hyp] for v in range(len(matrix))])

    def plausible_emissions(self, sender_index: int, hyp: int) -> list[int]:
        matrix = self.likelihoods.rows[self.sensor_rows[sender_index]]
        out = [v for v in range(len(matrix)) if matrix[v][hyp] >= PLAUSIBLE_EMISSION_FLOOR]
        if not out:
            out = [self.modal_emission(sender_index, hyp)]
        return out

    def candidates_for(self, variable_id: int) -> tuple[Token, ...]:
        return self.ontology.tokens_for_variable(variable_id)

    def misalignment(
        self, sender_index: int, sender_belief: bl.BeliefState, a_sender: str, a_receiver: str
    ) -> float:
        """Probability, under the sender's belief, that the joint action fails."""
        a_leader, a_follower = self.oriented_pair(sender_index, a_sender, a_receiver)
        marginal = sender_belief.vector(self.compat_variable)
        acc = 0.0
        for w in range(len(marginal)):
            if not self.compat.success(w, a_leader, a_follower):
                acc += marginal[w]
        return acc

    def predict_candidate_receiver_actions(
        self,
        sender_index: int,
        receiver_belief: bl.BeliefState,
        receiver_policy: sc.PolicyTable,
        self_model_belief: bl.BeliefState,
        sender_policy: sc.PolicyTable,
        tau: float,
        depth: int,
        observed_variable: int,
    ) -> list[tuple[Token | None, bl.BeliefState, str]]:
        """Predicted receiver belief and action per candidate.

        Independent of the true-value hypothesis, so one preparation serves
        every hypothesis a silence indicator enumerates. Candidate order is
        silence first, then tokens by ascending concept_id.
        """
        out: list[tuple[Token | None, bl.BeliefState, str]] = []
        if depth <= 1:
            silence_pred = receiver_belief
        else:
            inner_view = SenderView(
                sender_index=sender_index,
                est_sender_belief=self_model_belief,
                sender_policy=sender_policy,
                receiver_belief=receiver_belief,
                receiver_policy=receiver_policy,
                depth=depth - 1,
            )
            silence_pred, _ = bl.silence_condition(receiver_belief, inner_view, tau, self)
        out.append((None, silence_pred, receiver_policy.action_for(silence_pred)))
        for token in self.candidates_for(observed_variable):
            evid = bl.Evidence(
                bl.EvidenceKind.TOKEN, token.target_variable, token.asserted_value,
                token.likelihood_row_id,
            )
            try:
                pred = bl.update_belief(receiver_belief, evid, self.likelihoods)
            except DegenerateEvidenceError:
                pred = receiver_belief
            out.append((token, pred, receiver_policy.action_for(pred)))
        return out

    def decide_from_candidates(
        self,
        sender_index: int,
        sender_belief: bl.BeliefState,
        sender_policy: sc.PolicyTable,
        candidates: list[tuple[Token | None, bl.BeliefState, str]],
        tau: float,
    ) -> MessageDecision:
        """Score prepared candidates against the sender's belief and pick one."""
        self_intent = sender_policy.action_for(sender_belief)
        log = []
        silence_mis = 0.0
        silence_action = candidates[0][2]
        best: tuple[Token | None, float, float] | None = None
        for token, _pred, a_receiver in candidates:
            mis = self.misalignment(sender_index, sender_belief, self_intent, a_receiver)
            cost = 0.0 if token is None else self.lambda_bits * token.size_bits
            utility = -mis - cost
            label = "SILENCE" if token is None else f"token:{token.concept_id}"
            log.append((label, mis, utility))
            if token is None:
                silence_mis = mis
            if best is None or utility > best[2]:
                best = (token, mis, utility)
            # Ties keep the earlier candidate: silence first, then lowest concept_id.

        if silence_mis <= tau:
            return MessageDecision(None, silence_mis, -silence_mis, silence_mis, False, tuple(log))

        choice, mis, utility = best
        forced = False
        if choice is None and silence_mis > self.safety_threshold:
            # Predictive validation: simulate the joint action at the most
            # likely world value; a conflict forces the best token out
            # regardless of bit cost.
            marginal = sender_belief.vector(self.compat_variable)
            w_star = _argmax_lowest(marginal)
            a_leader, a_follower = self.oriented_pair(sender_index, self_intent, silence_action)
            if not self.compat.success(w_star, a_leader, a_follower):
                token_entries = [
                    (tok, m, u)
                    for (tok, _, _), (_, m, u) in zip(candidates, log)
                    if tok is not None
                ]
                if token_entries:
                    forced_choice = token_entries[0]
                    for entry in token_entries[1:]:
                        if entry[1] < forced_choice[1]:
                            forced_choice = entry
                    choice, mis, utility = forced_choice
                    forced = True
        return MessageDecision(choice, mis, utility, silence_mis, forced, tuple(log))

    def silence_indicator(self, view: SenderView, tau: float) -> list[bool]:
        """For each hypothetical true value: would the modeled sender have stayed silent?"""
        variable_id = self.observed_variables[view.sender_index]
        arity = len(view.receiver_belief.vector(variable_id))
        candidates = self.predict_candidate_receiver_actions(
            sender_index=view.sender_index,
            receiver_belief=view.receiver_belief,
            receiver_policy=view.receiver_policy,
            self_model_belief=view.est_sender_belief,
            sender_policy=view.sender_policy,
            tau=tau,
            depth=view.depth,
            observed_variable=variable_id,
        )
        indicator = []
        row_id = self.sensor_rows[view.sender_index]
        for hyp in range(arity):
            silent_possible = False
            for emission in self.plausible_emissions(view.sender_index, hyp):
                evid = bl.Evidence(bl.EvidenceKind.OBSERVATION, variable_id, emission, row_id)
                try:
                    b_s = bl.update_belief(view.est_sender_belief, evid, self.likelihoods)
                except DegenerateEvidenceError:
                    # The branch is impossible under the model; silence
                    # carries no information about it either way.
                    silent_possible = True
                    break
                decision = self.decide_from_candidates(
                    view.sender_index, b_s, view.sender_policy, candidates, tau
                )
                if decision.choice is None:
                    silent_possible = True
                    break
            indicator.append(silent_possible)
        return indicator

    def sender_would_be_silent(self, hyp: int, view: SenderView, tau: float) -> bool:
        return self.silence_indicator(view, tau)[hyp]


def simulate_counterpart_update(
    cm: CounterpartModel,
    hypothetical: bl.Evidence | None,
    lm: bl.LikelihoodModel,
    gate: GatingContext,
    self_view: SenderView | None = None,
    tau: float = 0.0,
) -> bl.BeliefState:
    """Predicted peer belief after a hypothetical message (None = silence).

    At depth 1 silence leaves the estimate unchanged; at depth 2 it applies
    the peer's silence conditioning with the provided self-model view.
    Degenerate hypothetical evidence propagates to the caller.
    """
    if hypothetical is None:
        if cm.depth <= 1:
            return cm.est_belief
        if self_view is None:
            raise ValueError("depth-2 silence simulation needs a self-model view")
        conditioned, _ = bl.silence_condition(cm.est_belief, self_view, tau, gate)
        return conditioned
    return bl.update_belief(cm.est_belief, hypothetical, lm)


def predict_action(cm: CounterpartModel, predicted_belief: bl.BeliefState) -> str:
    return cm.policy_snapshot.action_for(predicted_belief)


def predicted_misalignment(
    self_intent: str,
    self_belief: bl.BeliefState,
    cm: CounterpartModel,
    candidate: Token | None,
    gate: GatingContext,
    tau: float,
    sender_index: int,
    self_model_belief: bl.BeliefState,
    self_policy: sc.PolicyTable,
) -> float:
    """Probability that the joint action fails if `candidate` is sent (None = silence)."""
    if candidate is None:
        view = SenderView(
            sender_index=sender_index,
            est_sender_belief=self_model_belief,
            sender_policy=self_policy,
            receiver_belief=cm.est_belief,
            receiver_policy=cm.policy_snapshot,
            depth=cm.depth - 1,
        ) if cm.depth >= 2 else None
        pred = simulate_counterpart_update(cm, None, gate.likelihoods, gate, view, tau)
    else:
        evid = bl.Evidence(
            bl.EvidenceKind.TOKEN, candidate.target_variable, candidate.asserted_value,
            candidate.likelihood_row_id,
        )
        try:
            pred = bl.update_belief(cm.est_belief, evid, gate.likelihoods)
        except DegenerateEvidenceError:
            pred = cm.est_belief
    a_receiver = predict_action(cm, pred)
    return gate.misalignment(sender_index, self_belief, self_intent, a_receiver)


def select_message(
    gate: GatingContext,
    sender_index: int,
    sender_belief: bl.BeliefState,
    sender_policy: sc.PolicyTable,
    cm: CounterpartModel,
    self_model_belief: bl.BeliefState,
    tau: float,
    observed_variable: int,
) -> MessageDecision:
    """Pick silence or the utility-maximizing token for this slot.

    Silence wins outright when its predicted misalignment is within tau;
    otherwise the argmax of -misalignment - lambda*bits decides, with ties
    resolved toward silence and then the lowest concept_id, and predictive
    validation forcing a token out when silence would walk into a conflict.
    """
    candidate_actions = gate.predict_candidate_receiver_actions(
        sender_index=sender_index,
        receiver_belief=cm.est_belief,
        receiver_policy=cm.policy_snapshot,
        self_model_belief=self_model_belief,
        sender_policy=sender_policy,
        tau=tau,
        depth=cm.depth,
        observed_variable=observed_variable,
    )
    return gate.decide_from_candidates(
        sender_index, sender_belief, sender_policy, candidate_actions, tau
    )


# Likelihood that an agent whose belief peaks on a value takes an action the
# policy does not map to any bucket of that value. Soft so that repeated
# observations concentrate the estimate without bucket-boundary whiplash.
ACTION_CONFIRM_SLACK = 0.2
_CONSISTENT_MASS_FLOOR = 0.02


def project_to_action_consistency(
    belief: bl.BeliefState, policy: sc.PolicyTable, observed_action: str
) -> bl.BeliefState:
    """Fold an observed action into a belief estimate.

    Bayes reweight: values whose buckets never map to the observed action
    are down-weighted by a fixed slack factor. When the estimate has
    effectively no mass on any consistent value the observation flatly
    contradicts it, and the estimate is replaced by a uniform mixture of
    the consistent buckets' representatives.
    """
    consistent = policy.buckets_for_action(observed_action)
    if not consistent:
        return belief
    if policy.bucket_of(belief) in consistent:
        return belief
    vec = belief.vector(policy.policy_variable)
    arity = len(vec)
    consistent_values = {value for value, _ in consistent}
    mass = 0.0
    for v in consistent_values:
        mass += vec[v]
    if mass < _CONSISTENT_MASS_FLOOR:
        mixed = [0.0] * arity
        share = 1.0 / len(consistent)
        for bucket in consistent:
            rep = sc.representative(arity, bucket)
            for i in range(arity):
                mixed[i] += share * rep[i]
    else:
        mixed = [
            vec[i] if i in consistent_values else vec[i] * ACTION_CONFIRM_SLACK
            for i in range(arity)
        ]
        total = 0.0
        for p in mixed:
            total += p
        mixed = [p / total for p in mixed]
    return belief.replace_vector(policy.policy_variable, mixed, belief.step_stamp + 1)


def confirm(
    cm: CounterpartModel,
    step: int,
    digest_match: bool | None = None,
    resync_belief: bl.BeliefState | None = None,
    observed_action: str | None = None,
) -> CounterpartModel:
    """Fold a confirmation event into the counterpart model.

    Digest match only freshens the confirmation stamp. A resync payload
    replaces the estimate outright. An observed action inconsistent with
    the estimate's bucket moves the estimate toward the closest buckets the
    snapshot policy maps to that action.
    """
    if digest_match:
        return replace(cm, last_confirmed_step=step)
    if resync_belief is not None:
        return replace(cm, est_belief=resync_belief, last_confirmed_step=step)
    if observed_action is not None:
        est = project_to_action_consistency(cm.est_belief, cm.policy_snapshot, observed_action)
        return replace(cm, est_belief=est, last_confirmed_step=step)
    return cm
