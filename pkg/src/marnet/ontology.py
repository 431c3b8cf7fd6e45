"""Shared ontology: variable schema, token codebook, digests, calibration.

The ontology is the structural anchor both agents interpret against. It is
a flat variable schema plus a token codebook; every token targets one
schema variable and carries a likelihood-row reference that fixes how
receivers weigh it as evidence. Digests are 64-bit FNV-1a hashes over a
canonical byte layout, so two independent implementations of the same
state produce identical anchors.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from .errors import SchemaMismatchError
from .rng import fnv1a64

DIGEST_SIZE_BITS = 96  # 64-bit hash + 32-bit version
DEFAULT_HEADER_BITS = 8


@dataclass(frozen=True)
class Variable:
    var_id: int
    arity: int
    value_labels: tuple[str, ...]

    def __post_init__(self):
        if self.arity < 2:
            raise SchemaMismatchError(f"variable {self.var_id}: arity must be >= 2")
        if len(self.value_labels) != self.arity:
            raise SchemaMismatchError(
                f"variable {self.var_id}: {len(self.value_labels)} labels for arity {self.arity}"
            )
        if len(set(self.value_labels)) != self.arity:
            raise SchemaMismatchError(f"variable {self.var_id}: duplicate value labels")


@dataclass(frozen=True)
class VariableSchema:
    variables: tuple[Variable, ...]

    def __post_init__(self):
        for i, var in enumerate(self.variables):
            if var.var_id != i:
                raise SchemaMismatchError("variable_ids must be contiguous 0..V-1")

    def arity(self, var_id: int) -> int:
        if not 0 <= var_id < len(self.variables):
            raise SchemaMismatchError(f"unknown variable {var_id}")
        return self.variables[var_id].arity

    def __len__(self) -> int:
        return len(self.variables)


@dataclass(frozen=True)
class Token:
    """A codebook symbol asserting one value of one variable.

    asserted_value is the emission index used when the token is applied as
    evidence; likelihood_row_id selects the reliability profile receivers
    use to weigh it.
    """

    concept_id: int
    target_variable: int
    likelihood_row_id: int
    asserted_value: int
    size_bits: int


class DigestKind(enum.IntEnum):
    BELIEF = 0
    POLICY = 1
    ONTOLOGY = 2


@dataclass(frozen=True)
class Digest:
    kind: DigestKind
    hash: int
    version: int
    size_bits: int = DIGEST_SIZE_BITS


class CalibrationOutcome(enum.Enum):
    IN_SYNC = "in_sync"
    STALE_LOCAL = "stale_local"
    STALE_PEER = "stale_peer"


def min_token_bits(codebook_size: int, header_bits: int) -> int:
    """ceil(log2(codebook size)) + header bits; a codebook of one needs 0 id bits."""
    if codebook_size < 1:
        raise SchemaMismatchError("codebook must not be empty")
    return (codebook_size - 1).bit_length() + header_bits


@dataclass(frozen=True)
class Ontology:
    schema: VariableSchema
    codebook: tuple[Token, ...]
    header_bits: int = DEFAULT_HEADER_BITS
    version: int = 0
    _by_variable: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        floor = min_token_bits(len(self.codebook), self.header_bits)
        covered = set()
        for i, tok in enumerate(self.codebook):
            if tok.concept_id != i:
                raise SchemaMismatchError("codebook concept_ids must be contiguous 0..C-1")
            arity = self.schema.arity(tok.target_variable)  # raises on unknown variable
            if not 0 <= tok.asserted_value < arity:
                raise SchemaMismatchError(
                    f"token {i}: asserted value {tok.asserted_value} out of range"
                )
            if tok.size_bits < floor:
                raise SchemaMismatchError(
                    f"token {i}: size_bits {tok.size_bits} below floor {floor}"
                )
            covered.add(tok.target_variable)
        for var in self.schema.variables:
            if var.var_id not in covered:
                raise SchemaMismatchError(f"variable {var.var_id} targeted by no token")
        by_var: dict[int, tuple[Token, ...]] = {}
        for var in self.schema.variables:
            by_var[var.var_id] = tuple(
                t for t in self.codebook if t.target_variable == var.var_id
            )
        object.__setattr__(self, "_by_variable", by_var)

    def tokens_for_variable(self, var_id: int) -> tuple[Token, ...]:
        if var_id not in self._by_variable:
            raise SchemaMismatchError(f"unknown variable {var_id}")
        return self._by_variable[var_id]

    def bumped(self) -> "Ontology":
        """Copy with version incremented by exactly one (calibration event)."""
        return Ontology(self.schema, self.codebook, self.header_bits, self.version + 1)


def build_codebook(
    schema: VariableSchema, row_ids_per_variable: dict[int, tuple[int, ...]], header_bits: int
) -> tuple[Token, ...]:
    """Enumerate tokens variable-major, row-major, value-minor with uniform sizing."""
    count = 0
    for var in schema.variables:
        count += len(row_ids_per_variable[var.var_id]) * var.arity
    size = min_token_bits(count, header_bits)
    tokens = []
    concept = 0
    for var in schema.variables:
        for row_id in row_ids_per_variable[var.var_id]:
            for value in range(var.arity):
                tokens.append(Token(concept, var.var_id, row_id, value, size))
                concept += 1
    return tuple(tokens)


def ground_observation(obs, ont: Ontology) -> list[Token]:
    """All codebook tokens bearing on the observed variable, concept_id ascending."""
    return list(ont.tokens_for_variable(obs.variable_id))


def token_size_bits(token: Token) -> int:
    return token.size_bits


def make_digest(kind: DigestKind, source_bytes: bytes, version: int = 0) -> Digest:
    return Digest(kind=kind, hash=fnv1a64(source_bytes), version=version)


def compare_digests(local: Digest, peer: Digest) -> CalibrationOutcome:
    """Version-then-hash comparison; equal-version conflicts defer to the lower hash."""
    if peer.version == local.version and peer.hash == local.hash:
        return CalibrationOutcome.IN_SYNC
    if peer.version > local.version:
        return CalibrationOutcome.STALE_LOCAL
    if peer.version < local.version:
        return CalibrationOutcome.STALE_PEER
    # Same version, different content: the lower hash is authoritative, so
    # both agents converge without negotiation.
    if local.hash < peer.hash:
        return CalibrationOutcome.STALE_PEER
    return CalibrationOutcome.STALE_LOCAL


def calibrate(ont: Ontology, peer_digest: Digest) -> CalibrationOutcome:
    if peer_digest.kind not in (DigestKind.ONTOLOGY, DigestKind.POLICY):
        raise SchemaMismatchError("calibrate expects an ontology or policy digest")
    local = make_digest(DigestKind.ONTOLOGY, serialize_ontology(ont), ont.version)
    return compare_digests(local, peer_digest)


# Canonical serialization. Integers are little-endian 32-bit, quantized
# belief cells little-endian 16-bit, variables and tokens in ascending order.


def serialize_quantized_cells(cells) -> bytes:
    return struct.pack(f"<{len(cells)}H", *cells)


def serialize_ontology(ont: Ontology) -> bytes:
    parts = []
    for var in ont.schema.variables:
        parts.append(struct.pack("<ii", var.var_id, var.arity))
        for label in var.value_labels:
            raw = label.encode("utf-8")
            parts.append(struct.pack("<i", len(raw)))
            parts.append(raw)
    for tok in ont.codebook:
        parts.append(
            struct.pack(
                "<iiii", tok.concept_id, tok.target_variable, tok.likelihood_row_id, tok.size_bits
            )
        )
    return b"".join(parts)
