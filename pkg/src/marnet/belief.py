"""Belief states over ontology variables and the operations that move them.

A belief factorizes as one categorical distribution per schema variable.
Updates are exact Bayes conditioning against likelihood rows; divergence
metrics aggregate per-variable distances by maximum so that any single
misaligned variable is enough to trip a gate. All accumulations run in
ascending index order so results are bit-reproducible.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import DegenerateEvidenceError, SchemaMismatchError

PROB_FLOOR = 1e-12
NORMALIZATION_TOL = 1e-9
QUANT_STEPS = 1024


class EvidenceKind(enum.IntEnum):
    OBSERVATION = 0
    TOKEN = 1
    SILENCE = 2
    RAW = 3


@dataclass(frozen=True)
class Evidence:
    kind: EvidenceKind
    variable_id: int
    emitted_value: int | None = None
    likelihood_row_id: int | None = None


@dataclass(frozen=True)
class LikelihoodModel:
    """row_id -> arity x arity matrix with entry [v][s] = P(emission v | true s).

    Columns must be proper conditional distributions over emissions.
    """

    rows: dict[int, tuple[tuple[float, ...], ...]]

    def __post_init__(self):
        for row_id, matrix in self.rows.items():
            arity = len(matrix)
            for v, row in enumerate(matrix):
                if len(row) != arity:
                    raise SchemaMismatchError(f"likelihood row {row_id} is not square")
            for s in range(arity):
                col = 0.0
                for v in range(arity):
                    col += matrix[v][s]
                if abs(col - 1.0) > NORMALIZATION_TOL:
                    raise SchemaMismatchError(
                        f"likelihood row {row_id}: column {s} sums to {col}"
                    )

    def emission_row(self, row_id: int, emitted_value: int) -> tuple[float, ...]:
        """Likelihood vector over true values for one observed emission."""
        matrix = self.rows[row_id]
        if not 0 <= emitted_value < len(matrix):
            raise SchemaMismatchError(f"emission {emitted_value} out of range for row {row_id}")
        return matrix[emitted_value]


@dataclass(frozen=True)
class BeliefState:
    per_variable: tuple[tuple[float, ...], ...]
    step_stamp: int = 0

    def __post_init__(self):
        for var_id, vec in enumerate(self.per_variable):
            total = 0.0
            for p in vec:
                if p < 0.0:
                    raise SchemaMismatchError(f"variable {var_id}: negative probability")
                total += p
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise SchemaMismatchError(f"variable {var_id}: mass sums to {total}")

    def vector(self, var_id: int) -> tuple[float, ...]:
        if not 0 <= var_id < len(self.per_variable):
            raise SchemaMismatchError(f"unknown variable {var_id}")
        return self.per_variable[var_id]

    def replace_vector(self, var_id: int, vec, step_stamp: int) -> "BeliefState":
        new = list(self.per_variable)
        new[var_id] = tuple(vec)
        return BeliefState(tuple(new), step_stamp)


def uniform_belief(arities, step_stamp: int = 0) -> BeliefState:
    return BeliefState(tuple(tuple(1.0 / a for _ in range(a)) for a in arities), step_stamp)


def delta_belief(arities, values, step_stamp: int = 0) -> BeliefState:
    vecs = []
    for a, v in zip(arities, values):
        vecs.append(tuple(1.0 if i == v else 0.0 for i in range(a)))
    return BeliefState(tuple(vecs), step_stamp)


def _posterior(prior, likelihood_row):
    if len(prior) != len(likelihood_row):
        raise SchemaMismatchError("prior and likelihood row differ in length")
    post = [prior[i] * likelihood_row[i] for i in range(len(prior))]
    total = 0.0
    for p in post:
        total += p
    if total <= 0.0:
        raise DegenerateEvidenceError("evidence left zero posterior mass everywhere")
    return tuple(p / total for p in post)


def update_belief(b: BeliefState, e: Evidence, lm: LikelihoodModel) -> BeliefState:
    """Bayes-condition the target variable on one emission; other variables untouched."""
    if e.kind not in (EvidenceKind.OBSERVATION, EvidenceKind.TOKEN, EvidenceKind.RAW):
        raise SchemaMismatchError(f"cannot condition on evidence kind {e.kind}")
    prior = b.vector(e.variable_id)
    row = lm.emission_row(e.likelihood_row_id, e.emitted_value)
    post = _posterior(prior, row)
    return b.replace_vector(e.variable_id, post, b.step_stamp + 1)


class DivergenceMetric(enum.Enum):
    TV = "tv"
    KL = "kl"
    COS = "cos"


def _tv(p, q) -> float:
    acc = 0.0
    for i in range(len(p)):
        acc += abs(p[i] - q[i])
    return 0.5 * acc


def _kl(p, q) -> float:
    acc = 0.0
    for i in range(len(p)):
        if p[i] > 0.0:
            acc += p[i] * math.log(p[i] / max(q[i], PROB_FLOOR))
    return max(acc, 0.0)


def _cos(p, q) -> float:
    dot = 0.0
    np_ = 0.0
    nq = 0.0
    for i in range(len(p)):
        dot += p[i] * q[i]
        np_ += p[i] * p[i]
        nq += q[i] * q[i]
    denom = math.sqrt(np_) * math.sqrt(nq)
    if denom <= 0.0:
        return 1.0
    return 1.0 - dot / denom


def divergence(p: BeliefState, q: BeliefState, metric: DivergenceMetric) -> float:
    """Per-variable distance aggregated by maximum over variables."""
    if len(p.per_variable) != len(q.per_variable):
        raise SchemaMismatchError("belief states cover different variable sets")
    fn = {DivergenceMetric.TV: _tv, DivergenceMetric.KL: _kl, DivergenceMetric.COS: _cos}[metric]
    worst = 0.0
    for var_id in range(len(p.per_variable)):
        pv = p.per_variable[var_id]
        qv = q.per_variable[var_id]
        if len(pv) != len(qv):
            raise SchemaMismatchError(f"variable {var_id}: arity mismatch")
        d = fn(pv, qv)
        if d > worst:
            worst = d
    return worst


def surprise(b: BeliefState, e: Evidence, lm: LikelihoodModel) -> float:
    """-ln of the predictive probability of the emission, floored for finiteness."""
    if e.kind != EvidenceKind.OBSERVATION:
        raise SchemaMismatchError("surprise is defined for observations only")
    prior = b.vector(e.variable_id)
    row = lm.emission_row(e.likelihood_row_id, e.emitted_value)
    pred = 0.0
    for s in range(len(prior)):
        pred += prior[s] * row[s]
    return -math.log(max(pred, PROB_FLOOR))


def quantize_vector(vec) -> tuple[int, ...]:
    # Half-up rounding: round(p * 1024) with .5 always rounding up, so the
    # mapping is platform-independent.
    return tuple(int(math.floor(p * QUANT_STEPS + 0.5)) for p in vec)


def quantize(b: BeliefState) -> tuple[int, ...]:
    """Flat cell layout: variables ascending, values ascending."""
    cells = []
    for vec in b.per_variable:
        cells.extend(quantize_vector(vec))
    return tuple(cells)


def dequantize(cells, arities) -> BeliefState:
    vecs = []
    idx = 0
    for a in arities:
        raw = [cells[idx + i] / QUANT_STEPS for i in range(a)]
        idx += a
        total = sum(raw)
        if total <= 0.0:
            vecs.append(tuple(1.0 / a for _ in range(a)))
        else:
            vecs.append(tuple(r / total for r in raw))
    return BeliefState(tuple(vecs))


def condition_on_indicator(
    b: BeliefState, variable_id: int, indicator
) -> tuple[BeliefState, bool]:
    """Zero out values whose indicator is false and renormalize.

    Returns (belief, contradiction). When the indicator excludes every
    value the belief is returned unchanged and the contradiction flag is
    set; callers feed the flag to the anomaly monitor rather than raising.
    """
    prior = b.vector(variable_id)
    masked = [prior[i] if indicator[i] else 0.0 for i in range(len(prior))]
    total = 0.0
    for p in masked:
        total += p
    if total <= 0.0:
        return b, True
    post = tuple(p / total for p in masked)
    return b.replace_vector(variable_id, post, b.step_stamp + 1), False


def silence_condition(b: BeliefState, sender_model, tau: float, gate) -> tuple[BeliefState, bool]:
    """Condition on the event "the sender's gating test would have produced silence".

    The gate supplies the deterministic reconstruction of the sender's
    decision for each hypothetical true value of the sender's observed
    variable. Returns (posterior, contradiction_flag); an all-false
    indicator means silence was impossible under the model, which is a
    flag for the anomaly monitor, not an error.
    """
    variable_id = gate.observed_variable(sender_model)
    arity = len(b.vector(variable_id))
    indicator = [
        gate.sender_would_be_silent(hyp, sender_model, tau) for hyp in range(arity)
    ]
    return condition_on_indicator(b, variable_id, indicator)
