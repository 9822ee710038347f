"""Controllers and trainers: baseline, greedy, brute-force oracle, PPO."""

from .bruteforce import brute_force_optimum, evaluate_on_grid, snap_to_grid
from .configurations import (
    CONFIGURATION_NAMES,
    ConfigurationResult,
    policy_fn_from_nets,
    run_configuration,
    run_episode,
)
from .nets import LevelNets, load_policy_params, make_level_nets, save_policy_params
from .policies import baseline_policy, greedy_policy
from .ppo import TrainConfig, TrainLog, TrainResult, ppo_train

__all__ = [
    "CONFIGURATION_NAMES",
    "ConfigurationResult",
    "LevelNets",
    "TrainConfig",
    "TrainLog",
    "TrainResult",
    "baseline_policy",
    "brute_force_optimum",
    "evaluate_on_grid",
    "greedy_policy",
    "load_policy_params",
    "make_level_nets",
    "policy_fn_from_nets",
    "ppo_train",
    "run_configuration",
    "run_episode",
    "save_policy_params",
    "snap_to_grid",
]
