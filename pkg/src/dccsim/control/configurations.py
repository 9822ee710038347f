"""The training-configuration ladder and shared evaluation helpers.

Four configurations mirror the evaluation ladder: a fixed baseline, a trained
top level with everything else at defaults, a top level trained on top of a
frozen pretrained low/cooling pair, and a jointly trained hierarchy. The
pretrained phase uses the same step budget as the top phase; the joint
configuration gets the two-phase total so every trained variant consumes the
same number of environment interactions.

Evaluation always uses mean (greedy) actions and is deterministic per trained
policy; reported spread is the sample standard deviation across training
seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch

from ..cluster import ClusterConfig
from ..envs import EnvConfig, HierEnv, baseline_mean_step_co2
from ..errors import ConfigError
from .nets import LevelNets
from .ppo import TrainConfig, TrainLog, ppo_train

CONFIGURATION_NAMES = (
    "baseline",
    "top_only",
    "top_plus_pretrained_low",
    "joint_hrl",
)


@dataclass
class EpisodeSummary:
    co2_kg: float
    energy_kwh: dict
    cooling_kwh: float
    sla_units: float
    overtemp_steps: int
    per_dc_co2_kg: list

    def as_dict(self) -> dict:
        return {
            "co2_kg": self.co2_kg,
            "energy_kwh": dict(self.energy_kwh),
            "cooling_kwh": self.cooling_kwh,
            "sla_units": self.sla_units,
            "overtemp_steps": self.overtemp_steps,
            "per_dc_co2_kg": list(self.per_dc_co2_kg),
        }


def summarize_ledger(ledger) -> EpisodeSummary:
    energy = {k: sum(v) for k, v in ledger.energy_kwh.items()}
    return EpisodeSummary(
        co2_kg=ledger.total_co2_kg,
        energy_kwh=energy,
        cooling_kwh=ledger.cooling_energy_kwh(),
        sla_units=ledger.total_sla_units,
        overtemp_steps=ledger.total_overtemp_steps,
        per_dc_co2_kg=list(ledger.co2_kg),
    )


def policy_fn_from_nets(nets: dict[str, LevelNets]):
    """Mean-action (greedy) policy over whatever levels have networks."""

    def policy(obs: dict) -> dict:
        raw = {}
        with torch.no_grad():
            for level, ln in nets.items():
                if level == "top":
                    x = torch.as_tensor(obs["top"], dtype=torch.float32)
                    raw["top"] = ln.policy.mean(x.unsqueeze(0))[0].numpy()
                else:
                    x = torch.as_tensor(obs[level], dtype=torch.float32)
                    raw[level] = ln.policy.mean(x).numpy()
        return raw

    return policy


def run_episode(cluster_cfg: ClusterConfig, env_cfg: EnvConfig,
                policy_fn=None, seed: int = 0,
                reward_scale: float = 1.0) -> EpisodeSummary:
    """Run one full episode; ``policy_fn`` of None plays the baseline."""
    env = HierEnv(cluster_cfg, env_cfg, reward_scale=reward_scale)
    obs = env.reset(seed=seed)
    done = False
    while not done:
        raw = policy_fn(obs) if policy_fn is not None else None
        obs, _, done, _ = env.step(raw)
    return summarize_ledger(env.ledger)


def make_env_factory(cluster_cfg: ClusterConfig, env_cfg: EnvConfig,
                     reward_scale: float):
    def factory(_index: int) -> HierEnv:
        return HierEnv(cluster_cfg, env_cfg, reward_scale=reward_scale)

    return factory


@dataclass
class ConfigurationResult:
    name: str
    seeds: list
    per_seed_co2: list
    per_seed_summary: list
    mean_co2: float
    std_co2: float
    diverged: bool
    nets_per_seed: list
    logs_per_seed: list

    def as_report_dict(self) -> dict:
        return {
            "configuration": self.name,
            "seeds": list(self.seeds),
            "per_seed_co2_kg": list(self.per_seed_co2),
            "per_seed_summary": [s.as_dict() for s in self.per_seed_summary],
            "mean_co2_kg": self.mean_co2,
            "std_co2_kg": self.std_co2,
            "diverged": self.diverged,
        }


def _train_for_configuration(name: str, factory, train_cfg: TrainConfig,
                             seed: int) -> tuple[dict[str, LevelNets], list[TrainLog], bool]:
    if name == "top_only":
        result = ppo_train(factory, ("top",), train_cfg, seed)
        return result.nets, [result.log], result.diverged
    if name == "top_plus_pretrained_low":
        low_phase = ppo_train(factory, ("low", "cooling"), train_cfg, seed)
        top_phase = ppo_train(factory, ("top",), train_cfg, seed,
                              pretrained={"low": low_phase.nets["low"],
                                          "cooling": low_phase.nets["cooling"]})
        nets = {"top": top_phase.nets["top"],
                "low": low_phase.nets["low"],
                "cooling": low_phase.nets["cooling"]}
        return nets, [low_phase.log, top_phase.log], \
            low_phase.diverged or top_phase.diverged
    if name == "joint_hrl":
        joint_cfg = replace(train_cfg, total_steps=2 * train_cfg.total_steps)
        result = ppo_train(factory, ("top", "low", "cooling"), joint_cfg, seed)
        return result.nets, [result.log], result.diverged
    raise ConfigError(f"unknown configuration {name!r}")


def run_configuration(name: str, cluster_cfg: ClusterConfig, env_cfg: EnvConfig,
                      train_cfg: TrainConfig, seeds) -> ConfigurationResult:
    """Train (when the configuration calls for it) and evaluate per seed."""
    if name not in CONFIGURATION_NAMES:
        raise ConfigError(
            f"configuration must be one of {CONFIGURATION_NAMES}, got {name!r}"
        )
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("at least one seed is required")

    reward_scale = baseline_mean_step_co2(cluster_cfg)
    factory = make_env_factory(cluster_cfg, env_cfg, reward_scale)

    per_seed_co2 = []
    per_seed_summary = []
    nets_per_seed = []
    logs_per_seed = []
    diverged = False
    for seed in seeds:
        if name == "baseline":
            nets, logs = None, []
        else:
            nets, logs, seed_diverged = _train_for_configuration(
                name, factory, train_cfg, seed)
            diverged = diverged or seed_diverged
        policy = policy_fn_from_nets(nets) if nets else None
        summary = run_episode(cluster_cfg, env_cfg, policy,
                              seed=10_000 + seed, reward_scale=reward_scale)
        per_seed_co2.append(summary.co2_kg)
        per_seed_summary.append(summary)
        nets_per_seed.append(nets)
        logs_per_seed.append(logs)

    mean = float(np.mean(per_seed_co2))
    std = float(np.std(per_seed_co2, ddof=1)) if len(per_seed_co2) > 1 else 0.0
    return ConfigurationResult(
        name=name,
        seeds=seeds,
        per_seed_co2=per_seed_co2,
        per_seed_summary=per_seed_summary,
        mean_co2=mean,
        std_co2=std,
        diverged=diverged,
        nets_per_seed=nets_per_seed,
        logs_per_seed=logs_per_seed,
    )
