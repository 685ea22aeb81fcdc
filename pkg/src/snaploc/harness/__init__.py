"""Experiment harness: config schema, Monte Carlo runners, CLI."""

from .config import (
    CONFIG_SCHEMA,
    DEFAULT_CONFIG,
    EXPERIMENT_NAMES,
    SWEEP_AXES,
    ExperimentPlan,
    GridSpec,
    ScenarioConfig,
    SignalParams,
    config_digest,
    db_to_linear,
    dbm_to_watts,
    load_config,
    merge_config,
    scenario_from_dict,
    trial_signal_config,
    validate_config,
    watts_to_dbm,
)
from .experiments import (
    CSV_COLUMNS,
    EXPERIMENT_RUNNERS,
    ExperimentResult,
    compute_bounds,
    conditioned_bounds,
    run_bound_cdf,
    run_coverage_contour,
    run_parameter_sweep,
    run_rmse_vs_power,
    run_single_estimate,
)
from .cli import cli_main, main

__all__ = [
    "CONFIG_SCHEMA",
    "CSV_COLUMNS",
    "DEFAULT_CONFIG",
    "EXPERIMENT_NAMES",
    "EXPERIMENT_RUNNERS",
    "ExperimentPlan",
    "ExperimentResult",
    "GridSpec",
    "SWEEP_AXES",
    "ScenarioConfig",
    "SignalParams",
    "cli_main",
    "compute_bounds",
    "conditioned_bounds",
    "config_digest",
    "db_to_linear",
    "dbm_to_watts",
    "load_config",
    "main",
    "merge_config",
    "run_bound_cdf",
    "run_coverage_contour",
    "run_parameter_sweep",
    "run_rmse_vs_power",
    "run_single_estimate",
    "scenario_from_dict",
    "trial_signal_config",
    "validate_config",
    "watts_to_dbm",
]
