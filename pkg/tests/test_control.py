"""Tests for controllers: baseline, greedy, brute-force oracle, PPO trainer."""

import math

import numpy as np
import pytest
import torch

from conftest import make_cluster_config, constant_trace
from dccsim.cluster import DcTraces
from dccsim.control.bruteforce import (
    brute_force_optimum,
    evaluate_on_grid,
    grid_action,
    snap_to_grid,
)
from dccsim.control.configurations import (
    make_env_factory,
    run_configuration,
    run_episode,
)
from dccsim.control.nets import (
    load_policy_params,
    make_level_nets,
    save_policy_params,
)
from dccsim.control.policies import baseline_policy, cooling_bucket, greedy_policy
from dccsim.control.ppo import (
    TrainConfig,
    policy_loss_ppo,
    policy_loss_vanilla,
    ppo_train,
)
from dccsim.envs import EnvConfig, HierEnv, baseline_mean_step_co2
from dccsim.errors import DomainError, SearchSpaceTooLarge
from dccsim.traces import TimeTrace, TraceKind


def tiny_cluster(ci_values=(100.0, 900.0), steps=6, **overrides):
    """2-DC, 6-step cluster with single blade groups: oracle territory."""
    traces = []
    for ci in ci_values:
        if np.isscalar(ci):
            ci_arr = np.full(steps, float(ci))
        else:
            ci_arr = np.asarray(ci, dtype=np.float64)
        traces.append(DcTraces(
            carbon_intensity=TimeTrace(TraceKind.CARBON_INTENSITY, None, 900, ci_arr),
            ambient_temp=constant_trace(TraceKind.AMBIENT_TEMP, 22.0, steps),
            workload=constant_trace(TraceKind.WORKLOAD, 0.5, steps),
        ))
    base = dict(
        n_dcs=len(ci_values),
        episode_steps=steps,
        trace_list=traces,
        dc_overrides={"n_blade_groups": 1},
        flexible_fraction=0.6,
        task_granularity_units=10.0,
        max_defer_steps=2,
    )
    base.update(overrides)
    return make_cluster_config(**base)


class TestBaselinePolicy:
    def test_defer_always_zero(self, two_dc_cluster):
        env = HierEnv(two_dc_cluster, EnvConfig(), reward_scale=1.0)
        obs = env.reset(seed=0)
        raw = baseline_policy(obs, two_dc_cluster)
        assert all(pair[0] == 0.0 for pair in raw["low"])
        assert raw["top"] is None

    def test_stateless_constant_actions(self, two_dc_cluster):
        env = HierEnv(two_dc_cluster, EnvConfig(), reward_scale=1.0)
        obs = env.reset(seed=0)
        first = baseline_policy(obs, two_dc_cluster)
        obs, _, _, _ = env.step(first)
        second = baseline_policy(obs, two_dc_cluster)
        assert first == second

    def test_matches_masked_env_run(self, two_dc_cluster):
        cfg = two_dc_cluster
        masked = HierEnv(cfg, EnvConfig(), masked_levels=("top", "low", "cooling"),
                         reward_scale=1.0)
        masked.reset(seed=0)
        done = False
        while not done:
            _, _, done, _ = masked.step(None)

        env = HierEnv(cfg, EnvConfig(), reward_scale=1.0)
        obs = env.reset(seed=0)
        done = False
        while not done:
            obs, _, done, _ = env.step(baseline_policy(obs, cfg))
        assert env.ledger.total_co2_kg == masked.ledger.total_co2_kg


class TestGreedyPolicy:
    def _obs_with_ci(self, cfg, ci_norms, forecast=None):
        env = HierEnv(cfg, EnvConfig(), reward_scale=1.0)
        obs = env.reset(seed=0)
        for i, ci in enumerate(ci_norms):
            obs["top"][9 * i] = ci
            obs["low"][i, 0] = ci
            if forecast is not None:
                obs["top"][9 * i + 1:9 * i + 5] = forecast[i]
                obs["low"][i, 1:5] = forecast[i]
        return obs

    def test_zero_beta_uniform_weights(self, two_dc_cluster):
        obs = self._obs_with_ci(two_dc_cluster, [0.1, 0.9])
        raw = greedy_policy(obs, two_dc_cluster, beta=0.0, q=0.5)
        assert raw["top"] == [0.0, 0.0]  # softmax of zeros is uniform

    def test_softmax_weights_hand_computed(self, two_dc_cluster):
        # ci_norm (0.2, 0.8), beta 5 -> logits (-1, -4),
        # softmax = (0.9526, 0.0474).
        obs = self._obs_with_ci(two_dc_cluster, [0.2, 0.8])
        raw = greedy_policy(obs, two_dc_cluster, beta=5.0, q=0.5)
        from dccsim.envs import softmax
        weights = softmax(raw["top"])
        assert weights[0] == pytest.approx(0.9526, abs=1e-3)
        assert weights[1] == pytest.approx(0.0474, abs=1e-3)

    def test_defers_only_at_high_ci(self, two_dc_cluster):
        # Current strictly below all forecast values -> run now.
        obs = self._obs_with_ci(
            two_dc_cluster, [0.0, 0.9],
            forecast=[[0.5, 0.6, 0.7, 0.8], [0.1, 0.2, 0.3, 0.4]],
        )
        raw = greedy_policy(obs, two_dc_cluster, beta=1.0, q=0.5)
        assert raw["low"][0] == [0.0, 1.0]
        assert raw["low"][1] == [1.0, 0.0]

    def test_invalid_params(self, two_dc_cluster):
        obs = self._obs_with_ci(two_dc_cluster, [0.0, 0.0])
        with pytest.raises(DomainError):
            greedy_policy(obs, two_dc_cluster, beta=-1.0, q=0.5)
        with pytest.raises(DomainError):
            greedy_policy(obs, two_dc_cluster, beta=1.0, q=1.0)

    def test_cooling_bucket_table(self):
        assert cooling_bucket(0.1) == (0.35, 1.00)
        assert cooling_bucket(0.5) == (0.60, 0.50)
        assert cooling_bucket(1.0) == (0.90, 0.00)

    def test_monotone_ci_response(self):
        # Lowering one DC's carbon intensity must not lower the weight the
        # greedy dispatcher gives it, relative to the uniform-CI scenario.
        from dccsim.envs import softmax

        def greedy_weight_dc0(ci_pair):
            cfg = tiny_cluster(ci_values=ci_pair, steps=8)
            env = HierEnv(cfg, EnvConfig(), reward_scale=1.0)
            obs = env.reset(seed=0)
            raw = greedy_policy(obs, cfg, beta=4.0, q=0.5)
            return softmax(raw["top"])[0]

        w_low_ci = greedy_weight_dc0((200.0, 400.0))
        w_uniform = greedy_weight_dc0((300.0, 300.0))
        assert w_low_ci >= w_uniform
        assert w_uniform == pytest.approx(0.5, abs=1e-9)


class TestPolicySerialization:
    def test_roundtrip_bit_exact(self, tmp_path):
        torch.manual_seed(0)
        nets = {
            "top": make_level_nets(31, 3, "logit"),
            "low": make_level_nets(10, 2, "unit"),
            "cooling": make_level_nets(6, 4, "unit"),
        }
        path = tmp_path / "policy.bin"
        save_policy_params(nets, path)
        loaded = load_policy_params(path)
        assert set(loaded) == set(nets)
        for level in nets:
            for (k1, v1), (k2, v2) in zip(
                sorted(nets[level].policy.state_dict().items()),
                sorted(loaded[level].policy.state_dict().items()),
            ):
                assert k1 == k2
                assert torch.equal(v1.to(torch.float32), v2)

    def test_bad_magic_rejected(self, tmp_path):
        torch.manual_seed(0)
        nets = {"low": make_level_nets(10, 2, "unit")}
        path = tmp_path / "policy.bin"
        save_policy_params(nets, path)
        data = bytearray(path.read_bytes())
        data[:8] = b"BADMAGIC"
        path.write_bytes(bytes(data))
        with pytest.raises(ValueError):
            load_policy_params(path)


class TestBruteForce:
    def test_degenerate_single_dc_matches_baseline(self):
        # One DC, constant CI, nothing flexible: with cooling locked to the
        # open loop there is nothing to exploit, so the optimum is exactly
        # the baseline trajectory.
        cfg = tiny_cluster(ci_values=(400.0,), flexible_fraction=0.0)
        seq, best = brute_force_optimum(cfg, cooling_choices=("openloop",))
        baseline = run_episode(cfg, EnvConfig(latch_period=1), None)
        assert best == pytest.approx(baseline.co2_kg, rel=1e-12)

    def test_full_grid_never_worse_than_baseline(self):
        cfg = tiny_cluster()
        _, best = brute_force_optimum(cfg)
        baseline = run_episode(cfg, EnvConfig(latch_period=1), None)
        assert best <= baseline.co2_kg + 1e-9

    def test_dominant_low_ci_dc_attracts_all_load(self):
        # CI 100 vs 900 with ample capacity: every step routes the flexible
        # pool to the green DC.
        cfg = tiny_cluster(ci_values=(100.0, 900.0))
        seq, best = brute_force_optimum(cfg)
        assert all(choice[0] == "greenest" for choice in seq)

    def test_guard_on_search_space(self):
        cfg = tiny_cluster(steps=32, trace_list=None)
        with pytest.raises(SearchSpaceTooLarge):
            brute_force_optimum(cfg)

    def test_snapped_controllers_respect_the_bound(self):
        cfg = tiny_cluster(ci_values=(150.0, 750.0))
        _, best = brute_force_optimum(cfg)
        env_cfg = EnvConfig(latch_period=1)

        rng = np.random.default_rng(3)

        def random_policy(obs):
            return {
                "top": rng.normal(size=2),
                "low": rng.random((2, 2)),
                "cooling": rng.random((2, 3)),
            }

        for policy in (random_policy,
                       lambda obs: baseline_policy(obs, cfg),
                       lambda obs: greedy_policy(obs, cfg)):
            co2, _ = evaluate_on_grid(policy, cfg, env_cfg)
            assert co2 >= best - 1e-9

    def test_snap_identity_on_grid_points(self):
        # Distinct workloads keep the origin distribution away from uniform,
        # otherwise the two candidates tie and the snap is ambiguous.
        steps = 6
        traces = []
        for ci, load in ((100.0, 0.3), (900.0, 0.7)):
            traces.append(DcTraces(
                carbon_intensity=constant_trace(TraceKind.CARBON_INTENSITY, ci, steps),
                ambient_temp=constant_trace(TraceKind.AMBIENT_TEMP, 22.0, steps),
                workload=constant_trace(TraceKind.WORKLOAD, load, steps),
            ))
        cfg = tiny_cluster(trace_list=traces)
        action = grid_action(cfg, 0, "uniform", 1.0, "eco")
        choice, snapped = snap_to_grid(action, cfg, 0)
        assert choice == ("uniform", 1.0, "eco")
        assert snapped == action


def toy_defer_cluster(steps=64):
    """1-DC scenario with alternating carbon intensity and 1-step deferrals."""
    ci = np.where(np.arange(steps) % 2 == 0, 700.0, 100.0)
    traces = DcTraces(
        carbon_intensity=TimeTrace(TraceKind.CARBON_INTENSITY, None, 900, ci),
        ambient_temp=constant_trace(TraceKind.AMBIENT_TEMP, 22.0, steps),
        workload=constant_trace(TraceKind.WORKLOAD, 0.5, steps),
    )
    return make_cluster_config(
        n_dcs=1, episode_steps=steps, trace_list=[traces],
        flexible_fraction=1.0, max_defer_steps=1, task_granularity_units=10.0,
    )


class TestPpoTrain:
    def test_determinism_identical_logs(self):
        cfg = toy_defer_cluster(steps=16)
        env_cfg = EnvConfig(latch_period=1)
        scale = baseline_mean_step_co2(cfg)
        factory = make_env_factory(cfg, env_cfg, scale)
        tc = TrainConfig(total_steps=256 * 2 * 3, rollout_len=256, n_envs=2)
        a = ppo_train(factory, ("low",), tc, seed=11)
        b = ppo_train(factory, ("low",), tc, seed=11)
        assert not a.diverged and not b.diverged
        assert a.log.as_dicts() == b.log.as_dicts()

    def test_losses_finite_throughout(self):
        cfg = toy_defer_cluster(steps=16)
        env_cfg = EnvConfig(latch_period=1)
        factory = make_env_factory(cfg, env_cfg, baseline_mean_step_co2(cfg))
        tc = TrainConfig(total_steps=256 * 2 * 4, rollout_len=256, n_envs=2)
        result = ppo_train(factory, ("low", "cooling"), tc, seed=5)
        assert not result.diverged
        for row in result.log.as_dicts():
            for key, value in row.items():
                if isinstance(value, float):
                    assert math.isfinite(value), f"{key} not finite"

    def test_a2c_variant_trains(self):
        cfg = toy_defer_cluster(steps=16)
        env_cfg = EnvConfig(latch_period=1)
        factory = make_env_factory(cfg, env_cfg, baseline_mean_step_co2(cfg))
        tc = TrainConfig(algo="a2c", total_steps=256 * 2 * 3, rollout_len=256,
                         n_envs=2)
        result = ppo_train(factory, ("low",), tc, seed=2)
        assert not result.diverged
        assert len(result.log.rows) == 3

    def test_update_direction_matches_vanilla_pg(self):
        # With a huge clip range, one epoch and one minibatch, the clipped
        # surrogate's gradient at the sampling parameters must equal the
        # plain policy-gradient estimator on the same batch.
        torch.manual_seed(0)
        policy = make_level_nets(10, 2, "unit").policy
        obs = torch.randn(64, 10)
        with torch.no_grad():
            dist = policy.distribution(obs)
            actions = dist.sample()
            old_logp = dist.log_prob(actions).sum(-1)
        adv = torch.randn(64)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        loss_ppo = policy_loss_ppo(policy, obs, actions, old_logp, adv,
                                   clip_eps=1e9)
        grad_ppo = torch.autograd.grad(loss_ppo, list(policy.parameters()))
        loss_pg = policy_loss_vanilla(policy, obs, actions, adv)
        grad_pg = torch.autograd.grad(loss_pg, list(policy.parameters()))

        flat_ppo = torch.cat([g.reshape(-1) for g in grad_ppo])
        flat_pg = torch.cat([g.reshape(-1) for g in grad_pg])
        cosine = torch.dot(flat_ppo, flat_pg) / (
            flat_ppo.norm() * flat_pg.norm())
        assert float(cosine) >= 0.999


class TestRunConfiguration:
    def test_baseline_zero_std(self):
        cfg = tiny_cluster()
        result = run_configuration(
            "baseline", cfg, EnvConfig(latch_period=1),
            TrainConfig(total_steps=256), seeds=[1, 2, 3],
        )
        assert result.std_co2 == 0.0
        assert len(set(result.per_seed_co2)) == 1

    def test_pretrained_low_params_frozen_during_top_phase(self):
        cfg = toy_defer_cluster(steps=16)
        env_cfg = EnvConfig(latch_period=1)
        scale = baseline_mean_step_co2(cfg)
        factory = make_env_factory(cfg, env_cfg, scale)
        tc = TrainConfig(total_steps=256 * 2, rollout_len=256, n_envs=2)
        low_phase = ppo_train(factory, ("low", "cooling"), tc, seed=3)
        before = {
            level: low_phase.nets[level].clone_state()
            for level in ("low", "cooling")
        }
        ppo_train(factory, ("top",), tc, seed=3,
                  pretrained={"low": low_phase.nets["low"],
                              "cooling": low_phase.nets["cooling"]})
        for level in ("low", "cooling"):
            after = low_phase.nets[level].clone_state()
            for comp in ("policy", "value"):
                for key in before[level][comp]:
                    assert torch.equal(before[level][comp][key],
                                       after[comp][key])

    def test_unknown_configuration_rejected(self):
        from dccsim.errors import ConfigError
        cfg = tiny_cluster()
        with pytest.raises(ConfigError):
            run_configuration("nonsense", cfg, EnvConfig(latch_period=1),
                              TrainConfig(), seeds=[0])
