"""Experiment harness: scenario files, episode runner, CLI, report tooling."""

from .scenario import Scenario, bundled_scenario_names, load_scenario
from .runner import simulate_run, train_run

__all__ = [
    "Scenario",
    "bundled_scenario_names",
    "load_scenario",
    "simulate_run",
    "train_run",
]
