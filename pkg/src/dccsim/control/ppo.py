"""Clipped-surrogate policy-gradient trainer for the hierarchical levels.

One trainer instance drives a small fleet of lock-stepped environments (all
sharing episode length and latch period), samples every trained level from its
Gaussian policy, and updates with the standard clipped objective plus value
loss and entropy bonus over GAE advantages. The top level is trained on
macro-transitions: one transition per latch window with the window's summed
reward.

Levels not being trained either act with frozen pretrained parameters (mean
actions) or fall back to the environment's built-in defaults. Runs are
deterministic for a fixed (seed, config) under the single-worker rollout used
here; an A2C variant (single epoch, no ratio clipping) shares the machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..envs import LEVELS, HierEnv
from ..errors import ConfigError
from .nets import DEFAULT_HIDDEN, LevelNets, make_level_nets

ALGOS = ("ppo", "a2c")


@dataclass(frozen=True)
class TrainConfig:
    algo: str = "ppo"
    total_steps: int = 65536
    rollout_len: int = 256
    n_envs: int = 4
    minibatches: int = 4
    epochs: int = 4
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    learning_rate: float = 3e-4
    grad_clip: float = 0.5
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    log_std_init: float = -0.5
    adv_norm: bool = True

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.clip_eps <= 0:
            raise ConfigError("clip_eps must be positive")
        if not 0 < self.gamma <= 1 or not 0 < self.gae_lambda <= 1:
            raise ConfigError("gamma and gae_lambda must lie in (0, 1]")
        for name in ("total_steps", "rollout_len", "n_envs", "minibatches", "epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass
class TrainLog:
    """Per-iteration training record; finite throughout a healthy run."""

    rows: list[dict] = field(default_factory=list)

    def append(self, **row) -> None:
        self.rows.append(row)

    def co2_column(self) -> list[float]:
        return [r["mean_episode_co2"] for r in self.rows]

    def as_dicts(self) -> list[dict]:
        return list(self.rows)


@dataclass
class TrainResult:
    nets: dict[str, LevelNets]
    log: TrainLog
    diverged: bool = False


def _level_specs(env: HierEnv) -> dict:
    """Per-level (obs_dim, act_dim, out_mode, streams-per-env)."""
    n = env.n_dcs
    groups = {dc.n_blade_groups for dc in env.cfg.dc_configs}
    if len(groups) != 1:
        raise ConfigError("shared cooling policies require a uniform blade-group count")
    g = groups.pop()
    return {
        "top": {"obs": env.obs_dims()["top"], "act": n, "mode": "logit", "per_env": 1},
        "low": {"obs": 10, "act": 2, "mode": "unit", "per_env": n},
        "cooling": {"obs": 6, "act": 2 + g, "mode": "unit", "per_env": n},
    }


class _Fleet:
    """Lock-stepped environment fleet with per-level observation batching."""

    def __init__(self, env_factory, n_envs: int, seed: int):
        self.envs = [env_factory(i) for i in range(n_envs)]
        first = self.envs[0]
        self.episode_steps = first.episode_steps
        self.latch = first.env_cfg.latch_period
        for env in self.envs:
            if env.episode_steps != self.episode_steps or \
                    env.env_cfg.latch_period != self.latch:
                raise ConfigError("fleet environments must share episode/latch timing")
        if self.episode_steps % self.latch != 0:
            raise ConfigError("episode_steps must be a multiple of latch_period")
        self.n_envs = n_envs
        self.n_dcs = first.n_dcs
        self.seed = seed
        self.resets = 0
        self.t = 0
        self.episode_co2: list[float] = []
        self.obs = [env.reset(seed + 1000 * i) for i, env in enumerate(self.envs)]

    def batch_obs(self, level: str) -> torch.Tensor:
        if level == "top":
            arr = np.stack([o["top"] for o in self.obs])
        else:
            arr = np.concatenate([o[level] for o in self.obs], axis=0)
        return torch.as_tensor(arr, dtype=torch.float32)

    def step(self, raw_per_env: list[dict]):
        rewards = {"top": np.empty(self.n_envs),
                   "low": np.empty(self.n_envs * self.n_dcs),
                   "cooling": np.empty(self.n_envs * self.n_dcs)}
        done = False
        for e, env in enumerate(self.envs):
            obs, r, env_done, _ = env.step(raw_per_env[e])
            self.obs[e] = obs
            rewards["top"][e] = r["top"]
            rewards["low"][e * self.n_dcs:(e + 1) * self.n_dcs] = r["low"]
            rewards["cooling"][e * self.n_dcs:(e + 1) * self.n_dcs] = r["cooling"]
            done = env_done  # lock-step: identical across the fleet
        self.t += 1
        if done:
            for e, env in enumerate(self.envs):
                self.episode_co2.append(env.ledger.total_co2_kg)
            self.resets += 1
            self.obs = [
                env.reset(self.seed + 1000 * i + self.resets)
                for i, env in enumerate(self.envs)
            ]
            self.t = 0
        return rewards, done


def _mean_raw_actions(nets: dict[str, LevelNets], fleet: _Fleet,
                      levels: tuple[str, ...]) -> dict[str, np.ndarray]:
    out = {}
    with torch.no_grad():
        for level in levels:
            obs = fleet.batch_obs(level)
            out[level] = nets[level].policy.mean(obs).numpy()
    return out


def ppo_train(env_factory, train_levels, cfg: TrainConfig, seed: int,
              pretrained: dict[str, LevelNets] | None = None) -> TrainResult:
    """Train the given levels; frozen pretrained levels act with mean actions.

    Deterministic for fixed (seed, cfg) with this single-worker rollout.
    Returns the trained parameters, the per-iteration log, and a divergence
    flag; on a non-finite loss the last finite checkpoint is returned.
    """
    train_levels = tuple(train_levels)
    for level in train_levels:
        if level not in LEVELS:
            raise ConfigError(f"unknown level {level!r}")
    pretrained = dict(pretrained or {})

    torch.manual_seed(seed)
    fleet = _Fleet(env_factory, cfg.n_envs, seed)
    if cfg.rollout_len % fleet.latch != 0:
        raise ConfigError("rollout_len must be a multiple of latch_period")
    specs = _level_specs(fleet.envs[0])

    nets: dict[str, LevelNets] = {}
    optimizers: dict[str, torch.optim.Adam] = {}
    for level in train_levels:
        spec = specs[level]
        nets[level] = make_level_nets(spec["obs"], spec["act"], spec["mode"],
                                      hidden=cfg.hidden,
                                      log_std_init=cfg.log_std_init)
        optimizers[level] = torch.optim.Adam(nets[level].parameters(),
                                             lr=cfg.learning_rate)
    frozen_levels = tuple(
        lvl for lvl in LEVELS if lvl not in train_levels and lvl in pretrained
    )
    for level in frozen_levels:
        nets[level] = pretrained[level]

    steps_per_iter = cfg.rollout_len * cfg.n_envs
    n_iters = max(1, cfg.total_steps // steps_per_iter)
    log = TrainLog()
    checkpoint = {lvl: nets[lvl].clone_state() for lvl in train_levels}
    last_logged_co2 = None
    diverged = False

    for iteration in range(n_iters):
        episodes_before = len(fleet.episode_co2)
        batch = _collect_rollout(fleet, nets, train_levels, frozen_levels,
                                 specs, cfg)
        stats = {}
        for level in train_levels:
            level_stats = _update_level(nets[level], optimizers[level],
                                        batch[level], cfg)
            if level_stats is None:
                diverged = True
                break
            stats[level] = level_stats
        if diverged:
            for lvl in train_levels:
                nets[lvl].load_state(checkpoint[lvl])
            break
        checkpoint = {lvl: nets[lvl].clone_state() for lvl in train_levels}

        completed = fleet.episode_co2[episodes_before:]
        if completed:
            last_logged_co2 = float(np.mean(completed))
        elif last_logged_co2 is None:
            # No full episode yet: extrapolate from the running partial sums.
            partial = np.mean([env.ledger.total_co2_kg for env in fleet.envs])
            frac = max(fleet.t, 1) / fleet.episode_steps
            last_logged_co2 = float(partial / frac)
        row = {
            "iteration": iteration,
            "env_steps": (iteration + 1) * steps_per_iter,
            "mean_episode_co2": last_logged_co2,
        }
        for level, s in stats.items():
            row[f"{level}_policy_loss"] = s["policy_loss"]
            row[f"{level}_value_loss"] = s["value_loss"]
            row[f"{level}_entropy"] = s["entropy"]
        log.append(**row)

    return TrainResult(nets=nets, log=log, diverged=diverged)


def _collect_rollout(fleet: _Fleet, nets, train_levels, frozen_levels,
                     specs, cfg: TrainConfig) -> dict:
    """Collect cfg.rollout_len steps; returns per-level transition batches."""
    n_envs = fleet.n_envs
    n_dcs = fleet.n_dcs
    latch = fleet.latch
    t_top = cfg.rollout_len // latch

    buffers = {}
    for level in train_levels:
        spec = specs[level]
        streams = n_envs * spec["per_env"]
        horizon = t_top if level == "top" else cfg.rollout_len
        buffers[level] = {
            "obs": torch.empty((horizon, streams, spec["obs"]), dtype=torch.float32),
            "act": torch.empty((horizon, streams, spec["act"]), dtype=torch.float32),
            "logp": torch.empty((horizon, streams)),
            "value": torch.empty((horizon, streams)),
            "reward": torch.zeros((horizon, streams)),
            "done": torch.zeros((horizon, streams)),
        }

    top_window = 0  # index of the current top macro-transition
    for step in range(cfg.rollout_len):
        at_latch = fleet.t % latch == 0
        raw_per_env = [dict() for _ in range(n_envs)]

        for level in train_levels:
            if level == "top" and not at_latch:
                continue
            spec = specs[level]
            buf = buffers[level]
            row = top_window if level == "top" else step
            obs = fleet.batch_obs(level)
            with torch.no_grad():
                dist = nets[level].policy.distribution(obs)
                action = dist.sample()
                logp = dist.log_prob(action).sum(-1)
                value = nets[level].value(obs)
            buf["obs"][row] = obs
            buf["act"][row] = action
            buf["logp"][row] = logp
            buf["value"][row] = value
            act_np = action.numpy()
            for e in range(n_envs):
                if level == "top":
                    raw_per_env[e]["top"] = act_np[e]
                else:
                    raw_per_env[e][level] = act_np[e * n_dcs:(e + 1) * n_dcs]

        for level in frozen_levels:
            if level == "top" and not at_latch:
                continue
            mean = _mean_raw_actions(nets, fleet, (level,))[level]
            for e in range(n_envs):
                if level == "top":
                    raw_per_env[e]["top"] = mean[e]
                else:
                    raw_per_env[e][level] = mean[e * n_dcs:(e + 1) * n_dcs]

        rewards, done = fleet.step(raw_per_env)

        for level in train_levels:
            buf = buffers[level]
            if level == "top":
                buf["reward"][top_window] += torch.as_tensor(
                    rewards["top"], dtype=torch.float32)
                if done:
                    buf["done"][top_window] = 1.0
            else:
                buf["reward"][step] = torch.as_tensor(rewards[level],
                                                      dtype=torch.float32)
                if done:
                    buf["done"][step] = 1.0
        if (step + 1) % latch == 0:
            top_window += 1

    batch = {}
    for level in train_levels:
        buf = buffers[level]
        with torch.no_grad():
            bootstrap = nets[level].value(fleet.batch_obs(level))
        gamma = cfg.gamma ** latch if level == "top" else cfg.gamma
        adv, returns = _gae(buf["reward"], buf["value"], buf["done"],
                            bootstrap, gamma, cfg.gae_lambda)
        batch[level] = {
            "obs": buf["obs"].reshape(-1, buf["obs"].shape[-1]),
            "act": buf["act"].reshape(-1, buf["act"].shape[-1]),
            "logp": buf["logp"].reshape(-1),
            "adv": adv.reshape(-1),
            "returns": returns.reshape(-1),
        }
    return batch


def _gae(rewards, values, dones, bootstrap, gamma: float, lam: float):
    """Generalized advantage estimation over (T, S) tensors."""
    horizon = rewards.shape[0]
    adv = torch.zeros_like(rewards)
    last = torch.zeros_like(bootstrap)
    for t in range(horizon - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        next_value = values[t + 1] if t + 1 < horizon else bootstrap
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv, adv + values


def policy_loss_ppo(policy, obs, actions, old_logp, adv, clip_eps: float):
    """Clipped surrogate objective; reduces to -E[ratio * adv] as eps grows."""
    new_logp = policy.log_prob(obs, actions)
    ratio = torch.exp(new_logp - old_logp)
    surr1 = ratio * adv
    surr2 = torch.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    return -torch.min(surr1, surr2).mean()


def policy_loss_vanilla(policy, obs, actions, adv):
    """Plain policy-gradient estimator on the same batch (A2C, and the
    reference the clipped objective must match as eps -> inf, 1 epoch)."""
    new_logp = policy.log_prob(obs, actions)
    return -(new_logp * adv).mean()


def _update_level(level_nets: LevelNets, optimizer, batch, cfg: TrainConfig):
    obs, act = batch["obs"], batch["act"]
    old_logp, adv, returns = batch["logp"], batch["adv"], batch["returns"]
    if cfg.adv_norm and adv.numel() > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    n = obs.shape[0]
    epochs = cfg.epochs if cfg.algo == "ppo" else 1
    minibatches = cfg.minibatches if cfg.algo == "ppo" else 1
    mb_size = max(1, n // minibatches)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    count = 0
    for _ in range(epochs):
        perm = torch.randperm(n)
        for start in range(0, n, mb_size):
            idx = perm[start:start + mb_size]
            if cfg.algo == "ppo":
                p_loss = policy_loss_ppo(level_nets.policy, obs[idx], act[idx],
                                         old_logp[idx], adv[idx], cfg.clip_eps)
            else:
                p_loss = policy_loss_vanilla(level_nets.policy, obs[idx],
                                             act[idx], adv[idx])
            v_loss = torch.mean((level_nets.value(obs[idx]) - returns[idx]) ** 2)
            entropy = level_nets.policy.entropy(obs[idx]).mean()
            loss = p_loss + cfg.value_coef * v_loss - cfg.entropy_coef * entropy
            if not torch.isfinite(loss):
                return None
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(
                [p for p in level_nets.parameters()], cfg.grad_clip)
            optimizer.step()
            stats["policy_loss"] += float(p_loss.detach())
            stats["value_loss"] += float(v_loss.detach())
            stats["entropy"] += float(entropy.detach())
            count += 1
    return {k: v / count for k, v in stats.items()}
