"""Declarative scenario engine: benchmark configs, flows, and experiments."""

from .config import (
    ConfigError,
    GeneratorConfig,
    PetConfig,
    REFERENCE_COMPUTE_MS,
    ScenarioSpec,
    SensorConfig,
    Topology,
    encoding_from_dict,
    latency_from_config,
    load_scenario,
    scenario_from_dict,
)
from .experiments import (
    GDP_MODEL,
    LDP_MODEL,
    MIN_REPS,
    LatencySummary,
    LoadComparison,
    ProfilePoint,
    ProfileReport,
    UtilityPoint,
    UtilityReport,
    generate_weights,
    load_sweep,
    load_test,
    profile_obfuscation_experiment,
    synthetic_brew_profile,
    weight_sum_experiment,
)
from .runner import (
    RepOutcome,
    expected_hops,
    run_scenario,
    run_scenario_outcomes,
)
from .suite import benchmark_suite

__all__ = [
    "ConfigError",
    "GDP_MODEL",
    "GeneratorConfig",
    "LDP_MODEL",
    "LatencySummary",
    "LoadComparison",
    "MIN_REPS",
    "PetConfig",
    "ProfilePoint",
    "ProfileReport",
    "REFERENCE_COMPUTE_MS",
    "RepOutcome",
    "ScenarioSpec",
    "SensorConfig",
    "Topology",
    "UtilityPoint",
    "UtilityReport",
    "benchmark_suite",
    "encoding_from_dict",
    "expected_hops",
    "generate_weights",
    "latency_from_config",
    "load_scenario",
    "load_sweep",
    "load_test",
    "profile_obfuscation_experiment",
    "run_scenario",
    "run_scenario_outcomes",
    "scenario_from_dict",
    "synthetic_brew_profile",
    "weight_sum_experiment",
]
