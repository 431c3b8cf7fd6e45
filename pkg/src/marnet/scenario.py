"""Case-study worlds, policy tables, and compatibility matrices.

Two desk-scale scenarios ship as presets: a collaborative lift with a
leader/follower pair under asymmetric sensing, and an intersection
crossing with a conservative and an aggressive vehicle. Everything that
defines a scenario (likelihood rows, policies, compatibility entries,
world dynamics) is plain data loaded from config, so experiments can vary
it without touching code.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

from . import belief as bl
from . import ontology as on
from .errors import ConfigError, SchemaMismatchError
from .rng import SplitMix64, fnv1a64

CONFIDENCE_THRESHOLD = 0.6
BANDS = ("hi", "lo")


def bucket_order(arity: int) -> list[tuple[int, str]]:
    return [(v, band) for v in range(arity) for band in BANDS]


@dataclass(frozen=True)
class PolicyTable:
    """Belief-to-action mapping over (argmax value, confidence band) buckets."""

    policy_variable: int
    arity: int
    mapping: dict[tuple[int, str], str]
    version: int
    agent_role: str

    def __post_init__(self):
        for bucket in bucket_order(self.arity):
            if bucket not in self.mapping:
                raise ConfigError(f"policy for {self.agent_role} missing bucket {bucket}")

    def bucket_of(self, b: bl.BeliefState) -> tuple[int, str]:
        vec = b.vector(self.policy_variable)
        best = 0
        for i in range(1, len(vec)):
            if vec[i] > vec[best]:
                best = i
        band = "hi" if vec[best] >= CONFIDENCE_THRESHOLD else "lo"
        return best, band

    def action_for(self, b: bl.BeliefState) -> str:
        return self.mapping[self.bucket_of(b)]

    def action_for_bucket(self, bucket: tuple[int, str]) -> str:
        return self.mapping[bucket]

    def buckets_for_action(self, action: str) -> list[tuple[int, str]]:
        return [bk for bk in bucket_order(self.arity) if self.mapping[bk] == action]

    def serialize(self) -> bytes:
        parts = [struct.pack("<i", len(self.agent_role)), self.agent_role.encode("utf-8")]
        for bucket in bucket_order(self.arity):
            action = self.mapping[bucket].encode("utf-8")
            parts.append(struct.pack("<i", len(action)))
            parts.append(action)
        return b"".join(parts)

    def digest(self) -> on.Digest:
        return on.Digest(on.DigestKind.POLICY, fnv1a64(self.serialize()), self.version)


def drift_policy(pt: PolicyTable, rng: SplitMix64, p_drift: float) -> PolicyTable:
    """With probability p_drift, swap the actions of two distinct buckets."""
    if p_drift > 0.0 and rng.bernoulli(p_drift):
        buckets = bucket_order(pt.arity)
        i = rng.randrange(len(buckets))
        j = rng.randrange(len(buckets) - 1)
        if j >= i:
            j += 1
        mapping = dict(pt.mapping)
        mapping[buckets[i]], mapping[buckets[j]] = mapping[buckets[j]], mapping[buckets[i]]
        return replace(pt, mapping=mapping, version=pt.version + 1)
    return pt


@dataclass(frozen=True)
class CompatibilityMatrix:
    """Total map (world value, leader action, follower action) -> success."""

    variable_id: int
    leader_actions: tuple[str, ...]
    follower_actions: tuple[str, ...]
    entries: dict[tuple[int, str, str], bool]
    arity: int

    def __post_init__(self):
        for w in range(self.arity):
            for a in self.leader_actions:
                for b in self.follower_actions:
                    if (w, a, b) not in self.entries:
                        raise ConfigError(f"compatibility matrix missing entry {(w, a, b)}")

    def success(self, world_value: int, a_leader: str, a_follower: str) -> bool:
        key = (world_value, a_leader, a_follower)
        if key not in self.entries:
            raise SchemaMismatchError(f"no compatibility entry for {key}")
        return self.entries[key]

    @staticmethod
    def from_success_list(
        variable_id: int,
        arity: int,
        leader_actions,
        follower_actions,
        successes,
    ) -> "CompatibilityMatrix":
        entries = {
            (w, a, b): False
            for w in range(arity)
            for a in leader_actions
            for b in follower_actions
        }
        for w, a, b in successes:
            if (w, a, b) not in entries:
                raise ConfigError(f"success entry {(w, a, b)} outside the action space")
            entries[(w, a, b)] = True
        return CompatibilityMatrix(
            variable_id, tuple(leader_actions), tuple(follower_actions), entries, arity
        )


def all_compatible(variable_id: int, arity: int, leader_actions, follower_actions):
    entries = {
        (w, a, b): True
        for w in range(arity)
        for a in leader_actions
        for b in follower_actions
    }
    return CompatibilityMatrix(
        variable_id, tuple(leader_actions), tuple(follower_actions), entries, arity
    )


def evaluate_joint(
    world_value: int, a_leader: str, a_follower: str, compat: CompatibilityMatrix
) -> bool:
    return compat.success(world_value, a_leader, a_follower)


def make_transition(arity: int, p_stay: float, entry_weights) -> tuple[tuple[float, ...], ...]:
    """Markov kernel: stay with p_stay, else move proportionally to entry weights."""
    rows = []
    for s in range(arity):
        others = [entry_weights[t] if t != s else 0.0 for t in range(arity)]
        total = sum(others)
        row = []
        for t in range(arity):
            if t == s:
                row.append(p_stay)
            elif total > 0.0:
                row.append((1.0 - p_stay) * entry_weights[t] / total)
            else:
                row.append((1.0 - p_stay) / (arity - 1))
        rows.append(tuple(row))
    return tuple(rows)


def diffuse_vector(vec, transition) -> tuple[float, ...]:
    n = len(vec)
    out = [0.0] * n
    for s in range(n):
        ps = vec[s]
        if ps == 0.0:
            continue
        row = transition[s]
        for t in range(n):
            out[t] += ps * row[t]
    return tuple(out)


def diffuse_belief(b: bl.BeliefState, transitions: dict) -> bl.BeliefState:
    """Push each variable's marginal through its transition kernel (time update)."""
    vecs = []
    for var_id, vec in enumerate(b.per_variable):
        if var_id in transitions:
            vecs.append(diffuse_vector(vec, transitions[var_id]))
        else:
            vecs.append(vec)
    return bl.BeliefState(tuple(vecs), b.step_stamp)


@dataclass
class MarkovWorld:
    """Hidden categorical state with a stationary Markov transition."""

    value: int
    transition: tuple[tuple[float, ...], ...]

    def step(self, rng: SplitMix64) -> None:
        self.value = rng.choice_weighted(list(self.transition[self.value]))


@dataclass
class IntersectionState:
    """Cell positions for two vehicles sharing one conflict cell."""

    positions: list[int]
    path_cells: int
    conflict_cell: int

    def apply_actions(self, actions) -> None:
        for i, action in enumerate(actions):
            if action == "PROCEED":
                self.positions[i] = (self.positions[i] + 1) % self.path_cells

    def collision(self) -> bool:
        return self.positions[0] == self.conflict_cell and self.positions[1] == self.conflict_cell


def swap_emission_rows(matrix, a: int, b: int):
    """Permute two emission labels of a true sensor matrix (model left untouched)."""
    rows = [list(r) for r in matrix]
    rows[a], rows[b] = rows[b], rows[a]
    return tuple(tuple(r) for r in rows)


@dataclass
class AgentSpec:
    role: str
    sensor_row: int
    observed_variable: int


@dataclass
class ScenarioBundle:
    """Everything an episode needs, resolved from one scenario config dict."""

    name: str
    schema: on.VariableSchema
    ontology: on.Ontology
    likelihoods: bl.LikelihoodModel
    true_emission_rows: list  # per agent: matrix [emission][true], mutated by injections
    agents: list[AgentSpec]
    policies: list[PolicyTable]
    policy_variable: int
    compat_variable: int
    compat: CompatibilityMatrix
    transitions: dict
    initial_world_value: int
    raw_row_id: int
    action_names: tuple[str, ...]
    intersection: IntersectionState | None = None
    raw_config: dict = field(default_factory=dict)

    def arities(self) -> tuple[int, ...]:
        return tuple(v.arity for v in self.schema.variables)

    def world(self) -> MarkovWorld:
        return MarkovWorld(self.initial_world_value, self.transitions[self.compat_variable])

    def draw_observation(self, agent_index: int, world_value: int, rng: SplitMix64) -> bl.Evidence:
        spec = self.agents[agent_index]
        matrix = self.true_emission_rows[agent_index]
        weights = [matrix[v][world_value] for v in range(len(matrix))]
        emitted = rng.choice_weighted(weights)
        return bl.Evidence(
            bl.EvidenceKind.OBSERVATION, spec.observed_variable, emitted, spec.sensor_row
        )

    def inject_ood(self, agent_index: int, value_a: int = 0, value_b: int = 1) -> None:
        self.true_emission_rows[agent_index] = swap_emission_rows(
            self.true_emission_rows[agent_index], value_a, value_b
        )


def hi_band_representative(arity: int, value: int) -> tuple[float, ...]:
    peak = 0.86
    rest = (1.0 - peak) / (arity - 1)
    return tuple(peak if i == value else rest for i in range(arity))


def lo_band_representative(arity: int, value: int) -> tuple[float, ...]:
    peak = (1.0 / arity + CONFIDENCE_THRESHOLD) / 2.0
    rest = (1.0 - peak) / (arity - 1)
    return tuple(peak if i == value else rest for i in range(arity))


def representative(arity: int, bucket: tuple[int, str]) -> tuple[float, ...]:
    value, band = bucket
    if band == "hi":
        return hi_band_representative(arity, value)
    return lo_band_representative(arity, value)


def project_into_bucket(vec, bucket: tuple[int, str]) -> tuple[float, ...]:
    """Smallest deterministic move of vec into the given (argmax, band) region."""
    value, band = bucket
    arity = len(vec)
    margin = 0.02
    max_other = max((vec[i] for i in range(arity) if i != value), default=0.0)
    if band == "hi":
        p_star = min(max(vec[value], CONFIDENCE_THRESHOLD + margin), 0.98)
    else:
        lo_cap = CONFIDENCE_THRESHOLD - margin
        p_star = min(max(vec[value], max_other + margin, 1.0 / arity + margin), lo_cap)
    rest = 1.0 - p_star
    others_total = sum(vec[i] for i in range(arity) if i != value)
    out = [0.0] * arity
    out[value] = p_star
    if others_total > 0.0:
        for i in range(arity):
            if i != value:
                out[i] = vec[i] / others_total * rest
    else:
        share = rest / (arity - 1)
        for i in range(arity):
            if i != value:
                out[i] = share
    # Keep the argmax strictly at `value`: cap any other entry that crept to
    # the top and hand its excess to the remaining entries.
    cap = p_star - margin / 2.0
    for _ in range(arity):
        excess = 0.0
        free = []
        for i in range(arity):
            if i == value:
                continue
            if out[i] > cap:
                excess += out[i] - cap
                out[i] = cap
            elif out[i] < cap:
                free.append(i)
        if excess <= 0.0 or not free:
            break
        share = excess / len(free)
        for i in free:
            out[i] += share
    total = sum(out)
    return tuple(p / total for p in out)


def _parse_rows(raw_rows: dict) -> dict[int, tuple[tuple[float, ...], ...]]:
    rows = {}
    for key, matrix in raw_rows.items():
        rows[int(key)] = tuple(tuple(float(x) for x in row) for row in matrix)
    return rows


def build_scenario(config: dict) -> ScenarioBundle:
    """Resolve a scenario config dict into a ready-to-run bundle."""
    try:
        variables = tuple(
            on.Variable(i, len(v["labels"]), tuple(v["labels"]))
            for i, v in enumerate(config["variables"])
        )
        schema = on.VariableSchema(variables)
        rows = _parse_rows(config["rows"])
        likelihoods = bl.LikelihoodModel(rows)
        header_bits = int(config.get("header_bits", on.DEFAULT_HEADER_BITS))
        codebook_rows = {
            int(k): tuple(int(r) for r in v) for k, v in config["codebook_rows"].items()
        }
        codebook = on.build_codebook(schema, codebook_rows, header_bits)
        ontology = on.Ontology(schema, codebook, header_bits)

        label_index = {}
        for var in variables:
            for idx, label in enumerate(var.value_labels):
                label_index[(var.var_id, label)] = idx

        agents = [
            AgentSpec(a["role"], int(a["sensor_row"]), int(a["observed_variable"]))
            for a in config["agents"]
        ]
        if len(agents) != 2:
            raise ConfigError("scenarios are defined for exactly two agents")

        policy_variable = int(config["policy_variable"])
        arity = schema.arity(policy_variable)
        policies = []
        for agent, pconf in zip(agents, config["policies"]):
            mapping = {}
            for key, action in pconf["mapping"].items():
                label, band = key.rsplit(":", 1)
                mapping[(label_index[(policy_variable, label)], band)] = action
            policies.append(
                PolicyTable(policy_variable, arity, mapping, int(pconf.get("version", 0)), agent.role)
            )

        compat_variable = int(config["compat_variable"])
        compat_conf = config["compat"]
        successes = [
            (label_index[(compat_variable, w)], a, b) for w, a, b in compat_conf["success"]
        ]
        compat = CompatibilityMatrix.from_success_list(
            compat_variable,
            schema.arity(compat_variable),
            tuple(compat_conf["leader_actions"]),
            tuple(compat_conf["follower_actions"]),
            successes,
        )

        world_conf = config["world"]
        transitions = {}
        for key, wconf in world_conf["dynamics"].items():
            var_id = int(key)
            entry = [float(wconf["entry_weights"][lbl]) for lbl in variables[var_id].value_labels]
            transitions[var_id] = make_transition(
                schema.arity(var_id), float(wconf["p_stay"]), entry
            )
        initial = label_index[(compat_variable, world_conf["initial"])]

        intersection = None
        if "intersection" in config:
            ic = config["intersection"]
            intersection = IntersectionState(
                positions=list(ic["positions"]),
                path_cells=int(ic["path_cells"]),
                conflict_cell=int(ic["conflict_cell"]),
            )

        action_names = tuple(config["actions"])
        for pt in policies:
            for action in pt.mapping.values():
                if action not in action_names:
                    raise ConfigError(f"policy action {action} missing from action list")

        return ScenarioBundle(
            name=config["name"],
            schema=schema,
            ontology=ontology,
            likelihoods=likelihoods,
            true_emission_rows=[rows[a.sensor_row] for a in agents],
            agents=agents,
            policies=policies,
            policy_variable=policy_variable,
            compat_variable=compat_variable,
            compat=compat,
            transitions=transitions,
            initial_world_value=initial,
            raw_row_id=int(config["raw_row_id"]),
            action_names=action_names,
            intersection=intersection,
            raw_config=config,
        )
    except KeyError as exc:
        raise ConfigError(f"scenario config missing key: {exc}") from exc
