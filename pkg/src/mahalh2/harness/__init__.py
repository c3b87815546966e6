"""Declarative simulation experiments."""
from .config import (
    ESTIMATORS,
    ComponentSpec,
    ExperimentConfig,
    ScenarioSpec,
    SubsetSpec,
    config_to_dict,
    dump_config,
    list_presets,
    load_config,
    load_preset,
    parse_config,
)
from .runner import ExperimentError, ExperimentResult, run_experiment
from .summary import mean_sd_ci, summarize

__all__ = [
    "ESTIMATORS",
    "ComponentSpec",
    "ExperimentConfig",
    "ScenarioSpec",
    "SubsetSpec",
    "config_to_dict",
    "dump_config",
    "list_presets",
    "load_config",
    "load_preset",
    "parse_config",
    "ExperimentError",
    "ExperimentResult",
    "run_experiment",
    "mean_sd_ci",
    "summarize",
]
