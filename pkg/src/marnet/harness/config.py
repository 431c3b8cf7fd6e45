"""Run configuration: presets, validation, canonical hashing."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources

from ..channel import ChannelConfig
from ..coordination import Mode, SyncConfig
from ..errors import ConfigError
from ..rng import fnv1a64

FORMAT_VERSION = 1

SEED_ENV_VAR = "MARNET_SEED"

_PRESET_PACKAGE = "marnet.presets"


def preset_names() -> list[str]:
    names = []
    for entry in resources.files(_PRESET_PACKAGE).iterdir():
        if entry.name.endswith(".json"):
            names.append(entry.name[:-5])
    return sorted(names)


def load_preset(name: str) -> dict:
    try:
        text = resources.files(_PRESET_PACKAGE).joinpath(f"{name}.json").read_text()
    except FileNotFoundError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(text)


@dataclass
class DriftSchedule:
    p_drift: float = 0.0
    roles: tuple[str, ...] = ()

    @staticmethod
    def from_dict(raw: dict | None) -> "DriftSchedule":
        if not raw:
            return DriftSchedule()
        return DriftSchedule(float(raw.get("p_drift", 0.0)), tuple(raw.get("roles", ())))

    def as_dict(self) -> dict:
        return {"p_drift": self.p_drift, "roles": list(self.roles)}


@dataclass
class OodSchedule:
    at_slot: int
    agent: int
    swap_values: tuple[int, int] = (0, 1)

    @staticmethod
    def from_dict(raw: dict | None) -> "OodSchedule | None":
        if not raw:
            return None
        return OodSchedule(
            int(raw["at_slot"]), int(raw["agent"]), tuple(raw.get("swap_values", (0, 1)))
        )

    def as_dict(self) -> dict:
        return {"at_slot": self.at_slot, "agent": self.agent, "swap_values": list(self.swap_values)}


@dataclass
class RunConfig:
    scenario: dict
    paradigm: Mode
    seed: int
    horizon: int
    channel: ChannelConfig
    sync: SyncConfig
    tau: float = 0.2
    lambda_bits: float = 1e-3
    depth: int = 2
    eps_mbs: float = 0.15
    drift: DriftSchedule = field(default_factory=DriftSchedule)
    ood: OodSchedule | None = None

    def __post_init__(self):
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0")
        if not 1 <= self.depth <= 2:
            raise ConfigError("counterpart depth must be 1 or 2")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must lie in [0, 1]")

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "paradigm": self.paradigm.value,
            "seed": self.seed,
            "horizon": self.horizon,
            "channel": {
                "p_loss": self.channel.p_loss,
                "latency_slots": self.channel.latency_slots,
                "ber": self.channel.ber,
                "raw_bits_per_observation": self.channel.raw_bits_per_observation,
                "redundancy": self.channel.redundancy,
                "coordination_shares_loss": self.channel.coordination_shares_loss,
            },
            "sync": {
                "heartbeat_period": self.sync.heartbeat_period,
                "digest_period": self.sync.digest_period,
                "ood_threshold_sigmas": self.sync.ood_threshold_sigmas,
                "ood_ewma_alpha": self.sync.ood_ewma_alpha,
                "warmup_slots": self.sync.warmup_slots,
            },
            "tau": self.tau,
            "lambda_bits": self.lambda_bits,
            "depth": self.depth,
            "eps_mbs": self.eps_mbs,
            "drift": self.drift.as_dict(),
            "ood": self.ood.as_dict() if self.ood else None,
        }

    def config_hash(self) -> int:
        return fnv1a64(canonical_json(self.as_dict()))

    def with_overrides(self, **kwargs) -> "RunConfig":
        data = self.as_dict()
        data.update({k: v for k, v in kwargs.items() if v is not None})
        return run_config_from_dict(data)


def canonical_json(data) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")


def run_config_from_dict(raw: dict) -> RunConfig:
    try:
        scenario = raw["scenario"]
        if isinstance(scenario, str):
            scenario = load_preset(scenario)["scenario"]
        chan_raw = dict(raw.get("channel", {}))
        sync_raw = dict(raw.get("sync", {}))
        paradigm = Mode(raw.get("paradigm", "agentic"))
        seed = int(raw.get("seed", 0))
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            seed = int(env_seed)
        return RunConfig(
            scenario=scenario,
            paradigm=paradigm,
            seed=seed,
            horizon=int(raw.get("horizon", 1000)),
            channel=ChannelConfig(**chan_raw),
            sync=SyncConfig(**sync_raw),
            tau=float(raw.get("tau", 0.2)),
            lambda_bits=float(raw.get("lambda_bits", 1e-3)),
            depth=int(raw.get("depth", 2)),
            eps_mbs=float(raw.get("eps_mbs", 0.15)),
            drift=DriftSchedule.from_dict(raw.get("drift")),
            ood=OodSchedule.from_dict(raw.get("ood")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid run config: {exc}") from exc


def load_run_config(path_or_preset: str) -> RunConfig:
    """Load a config file by path, or a shipped preset by bare name."""
    if os.path.exists(path_or_preset):
        with open(path_or_preset, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    else:
        raw = load_preset(path_or_preset)
    return run_config_from_dict(raw)
