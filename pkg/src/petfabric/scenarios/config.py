"""Scenario configuration: typed spec plus strict JSON loading.

Configs mirror the ScenarioSpec fields one-to-one. Loading is strict:
unknown keys anywhere in the document are rejected, and every validation
message names the offending field, so a typo cannot silently change what a
benchmark measures. Encoding parameters are stored as {k, x_lo, x_hi} only;
the derived quantities are always recomputed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from ..codec import DomainError, EncodingParams, derive_params
from ..fabric import LATENCY_PRESETS, LatencyModel

ON_DEVICE = "on-device"
VIRTUALIZED = "virtualized"
RELAY_CHAIN = "relay-chain"

PET_NONE = "none"
PET_LDP = "ldp"
PET_GDP = "gdp"
PET_ASS = "ass"
PET_KRR = "krr"

#: Node compute times (ms) measured on the reference embedded testbed,
#: used as defaults by the benchmark suite. The simulator treats compute
#: as a model parameter; it never re-measures the host machine.
REFERENCE_COMPUTE_MS = {
    "baseline": 0.307,
    "ldp": 0.488,
    "gdp-on-device": 1.147,
    "gdp-virtualized": 0.0,
    "ass-on-device": 0.591,
    "ass-virtualized": 17.265,
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class Topology:
    kind: str
    depth: int = 0  # relay-chain only

    def __post_init__(self) -> None:
        if self.kind not in (ON_DEVICE, VIRTUALIZED, RELAY_CHAIN):
            raise ConfigError(f"topology.kind: unknown kind {self.kind!r}")
        if self.kind == RELAY_CHAIN:
            if self.depth < 1:
                raise ConfigError("topology.depth: relay chain needs depth >= 1")
        elif self.depth != 0:
            raise ConfigError(f"topology.depth: only valid for relay-chain, got {self.depth}")


@dataclass(frozen=True)
class PetConfig:
    kind: str
    epsilon: Optional[float] = None
    aggregator: Optional[str] = None  # gdp only
    m: Optional[int] = None  # ass only
    drop_one_share: bool = False  # ass only: inject loss of one random share
    parallel_shares: bool = False  # ass only: overlap the m share publishes

    def __post_init__(self) -> None:
        if self.kind not in (PET_NONE, PET_LDP, PET_GDP, PET_ASS, PET_KRR):
            raise ConfigError(f"pet.kind: unknown kind {self.kind!r}")
        needs_eps = self.kind in (PET_LDP, PET_GDP, PET_KRR)
        if needs_eps:
            if self.epsilon is None or not self.epsilon > 0:
                raise ConfigError(f"pet.epsilon: {self.kind} needs a positive epsilon")
        elif self.epsilon is not None:
            raise ConfigError(f"pet.epsilon: not valid for {self.kind}")
        if self.kind == PET_GDP:
            agg = self.aggregator if self.aggregator is not None else "sum"
            if agg not in ("sum", "mean"):
                raise ConfigError(f"pet.aggregator: expected sum or mean, got {agg!r}")
            object.__setattr__(self, "aggregator", agg)
        elif self.aggregator is not None:
            raise ConfigError("pet.aggregator: only valid for gdp")
        if self.kind == PET_ASS:
            if self.m is None or self.m < 2:
                raise ConfigError(
                    "pet.m: additive sharing needs at least 2 channels (m >= 2)"
                )
        else:
            if self.m is not None:
                raise ConfigError("pet.m: only valid for ass")
            if self.drop_one_share:
                raise ConfigError("pet.drop_one_share: only valid for ass")
            if self.parallel_shares:
                raise ConfigError("pet.parallel_shares: only valid for ass")


@dataclass(frozen=True)
class GeneratorConfig:
    """Per-sensor data source; bounds default to the encoding domain."""

    kind: str = "uniform"
    low: Optional[float] = None
    high: Optional[float] = None
    value: Optional[float] = None  # constant only

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "constant"):
            raise ConfigError(f"sensors.generator.kind: unknown kind {self.kind!r}")
        if self.kind == "constant":
            if self.value is None:
                raise ConfigError("sensors.generator.value: constant generator needs a value")
            if self.low is not None or self.high is not None:
                raise ConfigError("sensors.generator: constant takes no low/high")
        elif self.value is not None:
            raise ConfigError("sensors.generator.value: only valid for constant")


@dataclass(frozen=True)
class SensorConfig:
    count: int = 1
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ConfigError(f"sensors.count: need at least one sensor, got {self.count}")


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to reproduce one benchmark scenario from a seed."""

    name: str
    topology: Topology
    pet: PetConfig
    sensors: SensorConfig
    encoding: EncodingParams
    latency: LatencyModel
    compute_ms: float = 0.0
    overhead_ms: float = 0.0  # fixed per-message residual, folded into compute
    repetitions: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("name: must not be empty")
        if self.compute_ms < 0:
            raise ConfigError(f"compute_ms: must be >= 0, got {self.compute_ms}")
        if self.overhead_ms < 0:
            raise ConfigError(f"overhead_ms: must be >= 0, got {self.overhead_ms}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions: must be >= 1, got {self.repetitions}")
        if self.seed < 0:
            raise ConfigError(f"seed: must be >= 0, got {self.seed}")
        kind = self.topology.kind
        pet = self.pet.kind
        if kind == RELAY_CHAIN:
            if pet != PET_NONE:
                raise ConfigError("pet.kind: relay-chain carries unprocessed messages only")
            if self.sensors.count != 1:
                raise ConfigError("sensors.count: relay-chain measures a single source")
        if kind == VIRTUALIZED:
            if pet in (PET_LDP, PET_KRR):
                raise ConfigError(
                    f"pet.kind: {pet} perturbs at the source; it has no virtualized form"
                )
            if pet == PET_ASS and self.sensors.count != 1:
                raise ConfigError("sensors.count: virtualized ass splits one source value")
            if pet == PET_NONE and self.sensors.count != 1:
                raise ConfigError("sensors.count: a virtualized relay forwards one source")
        gen = self.sensors.generator
        lo = gen.low if gen.low is not None else self.encoding.x_lo
        hi = gen.high if gen.high is not None else self.encoding.x_hi
        if not (self.encoding.x_lo <= lo <= hi <= self.encoding.x_hi):
            raise ConfigError(
                "sensors.generator: bounds must nest inside the encoding domain"
            )
        if gen.kind == "constant" and not (
            self.encoding.x_lo <= gen.value <= self.encoding.x_hi
        ):
            raise ConfigError("sensors.generator.value: outside the encoding domain")

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return replace(self, seed=seed)


# --------------------------------------------------------------------------
# Strict dict/JSON parsing
# --------------------------------------------------------------------------

def check_keys(raw: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def require_key(raw: dict, key: str, where: str):
    if key not in raw:
        raise ConfigError(f"{where}.{key}: required")
    return raw[key]


def encoding_from_dict(raw: dict, where: str = "encoding") -> EncodingParams:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    check_keys(raw, {"k", "x_lo", "x_hi"}, where)
    try:
        return derive_params(
            x_lo=float(require_key(raw, "x_lo", where)),
            x_hi=float(require_key(raw, "x_hi", where)),
            k=int(require_key(raw, "k", where)),
        )
    except DomainError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def latency_from_config(raw: Union[str, dict], where: str = "latency") -> LatencyModel:
    if isinstance(raw, str):
        if raw not in LATENCY_PRESETS:
            raise ConfigError(
                f"{where}: unknown preset {raw!r}, expected one of {sorted(LATENCY_PRESETS)}"
            )
        return LATENCY_PRESETS[raw]
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a preset name or an object")
    check_keys(raw, {"per_hop_mean_ms", "jitter_std_ms", "distribution"}, where)
    try:
        return LatencyModel(
            per_hop_mean_ms=float(require_key(raw, "per_hop_mean_ms", where)),
            per_hop_jitter_std_ms=float(raw.get("jitter_std_ms", 0.0)),
            distribution=str(raw.get("distribution", "constant")),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def scenario_from_dict(raw: dict) -> ScenarioSpec:
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    check_keys(
        raw,
        {
            "name",
            "topology",
            "pet",
            "sensors",
            "encoding",
            "latency",
            "compute_ms",
            "overhead_ms",
            "repetitions",
            "seed",
        },
        "config",
    )
    topo_raw = require_key(raw, "topology", "config")
    check_keys(topo_raw, {"kind", "depth"}, "topology")
    topology = Topology(
        kind=str(require_key(topo_raw, "kind", "topology")),
        depth=int(topo_raw.get("depth", 0)),
    )
    pet_raw = require_key(raw, "pet", "config")
    check_keys(
        pet_raw,
        {"kind", "epsilon", "aggregator", "m", "drop_one_share", "parallel_shares"},
        "pet",
    )
    pet = PetConfig(
        kind=str(require_key(pet_raw, "kind", "pet")),
        epsilon=None if pet_raw.get("epsilon") is None else float(pet_raw["epsilon"]),
        aggregator=pet_raw.get("aggregator"),
        m=None if pet_raw.get("m") is None else int(pet_raw["m"]),
        drop_one_share=bool(pet_raw.get("drop_one_share", False)),
        parallel_shares=bool(pet_raw.get("parallel_shares", False)),
    )
    sensors_raw = raw.get("sensors", {})
    check_keys(sensors_raw, {"count", "generator"}, "sensors")
    gen_raw = sensors_raw.get("generator", {})
    check_keys(gen_raw, {"kind", "low", "high", "value"}, "sensors.generator")
    generator = GeneratorConfig(
        kind=str(gen_raw.get("kind", "uniform")),
        low=None if gen_raw.get("low") is None else float(gen_raw["low"]),
        high=None if gen_raw.get("high") is None else float(gen_raw["high"]),
        value=None if gen_raw.get("value") is None else float(gen_raw["value"]),
    )
    sensors = SensorConfig(count=int(sensors_raw.get("count", 1)), generator=generator)
    return ScenarioSpec(
        name=str(require_key(raw, "name", "config")),
        topology=topology,
        pet=pet,
        sensors=sensors,
        encoding=encoding_from_dict(require_key(raw, "encoding", "config")),
        latency=latency_from_config(require_key(raw, "latency", "config")),
        compute_ms=float(raw.get("compute_ms", 0.0)),
        overhead_ms=float(raw.get("overhead_ms", 0.0)),
        repetitions=int(raw.get("repetitions", 1)),
        seed=int(raw.get("seed", 0)),
    )


def load_scenario(path) -> ScenarioSpec:
    """Read and validate a scenario config file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return scenario_from_dict(raw)
