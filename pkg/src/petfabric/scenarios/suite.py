"""The six-configuration benchmark suite comparing PET placements.

Builds the canonical comparison set -- baseline, local DP, global DP on the
edge device and virtualized, additive sharing on the edge device and
virtualized -- with the reference compute constants, so the structural
latency ordering can be reproduced with any per-hop model.
"""

from __future__ import annotations

from typing import Optional

from ..fabric import LatencyModel, LATENCY_PRESETS
from .config import (
    GeneratorConfig,
    PetConfig,
    REFERENCE_COMPUTE_MS,
    ScenarioSpec,
    SensorConfig,
    Topology,
)
from ..codec import derive_params


def benchmark_suite(
    latency: Optional[LatencyModel] = None,
    repetitions: int = 100,
    seed: int = 0,
    m: int = 3,
    epsilon: float = 1.0,
    compute_ms: Optional[dict[str, float]] = None,
) -> list[ScenarioSpec]:
    """Build the six comparison scenarios, cheapest placement first."""
    latency = latency if latency is not None else LATENCY_PRESETS["testbed"]
    compute = dict(REFERENCE_COMPUTE_MS)
    if compute_ms:
        compute.update(compute_ms)
    encoding = derive_params(50.0, 120.0, 1)
    sensors = SensorConfig(count=1, generator=GeneratorConfig())
    trio = SensorConfig(count=3, generator=GeneratorConfig())

    def spec(name, topology, pet, sensor_cfg, compute_key):
        return ScenarioSpec(
            name=name,
            topology=topology,
            pet=pet,
            sensors=sensor_cfg,
            encoding=encoding,
            latency=latency,
            compute_ms=compute[compute_key],
            repetitions=repetitions,
            seed=seed,
        )

    return [
        spec(
            "baseline-on-device",
            Topology("on-device"),
            PetConfig("none"),
            sensors,
            "baseline",
        ),
        spec(
            "ldp-on-device",
            Topology("on-device"),
            PetConfig("ldp", epsilon=epsilon),
            sensors,
            "ldp",
        ),
        spec(
            "gdp-on-device",
            Topology("on-device"),
            PetConfig("gdp", epsilon=epsilon),
            trio,
            "gdp-on-device",
        ),
        spec(
            "gdp-virtualized",
            Topology("virtualized"),
            PetConfig("gdp", epsilon=epsilon),
            trio,
            "gdp-virtualized",
        ),
        spec(
            "ass-on-device",
            Topology("on-device"),
            PetConfig("ass", m=m),
            sensors,
            "ass-on-device",
        ),
        spec(
            "ass-virtualized",
            Topology("virtualized"),
            PetConfig("ass", m=m),
            sensors,
            "ass-virtualized",
        ),
    ]
