"""Scenario configuration, experiment drivers and the command line interface."""
from .config import ConfigError, ScenarioConfig, load_config, save_config
from .experiments import RunReport, benchmark, l1_distance, run_scenario, sensitivity_sweep, transfer_run

__all__ = [
    "ConfigError", "RunReport", "ScenarioConfig", "benchmark", "l1_distance", "load_config", "run_scenario",
    "save_config", "sensitivity_sweep", "transfer_run",
]
