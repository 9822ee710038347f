"""FastAPI service exposing the environment reset/step surface (dcc_env_v1).

The service wraps the core simulator so external toolchains can drive
environments over HTTP: create an environment from a scenario, step it with
flat per-level action vectors, read flat observations and rewards back. Errors
cross the boundary as JSON bodies carrying the native exception name.

Handles are process-local and invalid after close; many handles may coexist,
each owned by one client.
"""

from __future__ import annotations

import threading
import uuid

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import ENV_API_VERSION, __version__
from ..envs import HierEnv, baseline_raw_actions
from ..errors import DccSimError, DomainError, EpisodeFinished
from ..harness.scenario import Scenario, bundled_scenario_names, load_scenario
from . import schemas


class EnvRegistry:
    """Thread-safe map of live environment handles."""

    def __init__(self):
        self._lock = threading.Lock()
        self._envs: dict[str, tuple[HierEnv, Scenario]] = {}

    def create(self, env: HierEnv, scenario: Scenario) -> str:
        env_id = uuid.uuid4().hex
        with self._lock:
            self._envs[env_id] = (env, scenario)
        return env_id

    def get(self, env_id: str) -> tuple[HierEnv, Scenario]:
        with self._lock:
            if env_id not in self._envs:
                raise KeyError(env_id)
            return self._envs[env_id]

    def close(self, env_id: str) -> bool:
        with self._lock:
            return self._envs.pop(env_id, None) is not None


def _flat_obs(obs: dict) -> schemas.Observations:
    return schemas.Observations(
        top=[float(x) for x in np.asarray(obs["top"]).ravel()],
        low=[float(x) for x in np.asarray(obs["low"]).ravel()],
        cooling=[float(x) for x in np.asarray(obs["cooling"]).ravel()],
    )


def _dims(env: HierEnv) -> schemas.EnvDims:
    obs = env.obs_dims()
    act = env.act_dims()
    return schemas.EnvDims(
        n_dcs=env.n_dcs,
        blade_groups=[dc.n_blade_groups for dc in env.cfg.dc_configs],
        episode_steps=env.episode_steps,
        top=schemas.LevelDims(obs_dim=obs["top"], act_dim=act["top"]),
        low=schemas.LevelDims(obs_dim=obs["low"], act_dim=act["low"]),
        cooling=schemas.LevelDims(obs_dim=obs["cooling"], act_dim=act["cooling"]),
    )


def _flat_baseline(env: HierEnv) -> schemas.FlatActions:
    raw = baseline_raw_actions(env.cfg)
    return schemas.FlatActions(
        top=None,
        low=[float(x) for row in raw["low"] for x in row],
        cooling=[float(x) for row in raw["cooling"] for x in row],
    )


def _raw_from_flat(env: HierEnv, actions: schemas.FlatActions) -> dict:
    raw = {}
    act_dims = env.act_dims()
    n = env.n_dcs
    if actions.top is not None:
        if len(actions.top) != act_dims["top"]:
            raise DomainError(
                f"top action needs {act_dims['top']} entries, got {len(actions.top)}"
            )
        raw["top"] = actions.top
    if actions.low is not None:
        if len(actions.low) != act_dims["low"]:
            raise DomainError(
                f"low action needs {act_dims['low']} entries, got {len(actions.low)}"
            )
        raw["low"] = np.asarray(actions.low, dtype=np.float64).reshape(n, 2)
    if actions.cooling is not None:
        if len(actions.cooling) != act_dims["cooling"]:
            raise DomainError(
                f"cooling action needs {act_dims['cooling']} entries, "
                f"got {len(actions.cooling)}"
            )
        raw["cooling"] = actions.cooling
    return raw


def _report_dict(report) -> dict:
    return {
        "step": report.step,
        "total_co2_kg": report.total_co2_kg,
        "co2_kg": list(report.co2_kg),
        "utilization": list(report.utilization),
        "assigned": list(report.assigned),
        "executed": list(report.executed),
        "sla_units": list(report.sla_units),
        "overtemp_groups": list(report.overtemp_groups),
        "dtq_occupancy": list(report.dtq_occupancy),
        "energy_it_kwh": list(report.energy_it_kwh),
        "energy_pump_kwh": list(report.energy_pump_kwh),
        "energy_chiller_kwh": list(report.energy_chiller_kwh),
        "energy_transfer_kwh": list(report.energy_transfer_kwh),
    }


def create_app() -> FastAPI:
    app = FastAPI(
        title="dccsim environment service",
        version=__version__,
        description="Reset/step access to the data center cluster simulator.",
    )
    registry = EnvRegistry()

    @app.exception_handler(KeyError)
    async def _unknown_env(request, exc):
        return JSONResponse(
            status_code=404,
            content={"error": "UnknownEnv", "message": f"no such env: {exc}"},
        )

    @app.exception_handler(EpisodeFinished)
    async def _finished(request, exc):
        return JSONResponse(
            status_code=409,
            content={"error": "EpisodeFinished", "message": str(exc)},
        )

    @app.exception_handler(DccSimError)
    async def _native(request, exc):
        return JSONResponse(
            status_code=400,
            content={"error": type(exc).__name__, "message": str(exc)},
        )

    @app.get("/v1/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(
            status="ok", package_version=__version__, api_version=ENV_API_VERSION,
        )

    @app.get("/v1/scenarios", response_model=schemas.ScenarioListResponse)
    def scenarios():
        return schemas.ScenarioListResponse(scenarios=bundled_scenario_names())

    @app.post("/v1/envs", response_model=schemas.CreateEnvResponse)
    def create_env(request: schemas.CreateEnvRequest):
        scenario = load_scenario(request.scenario)
        env = HierEnv(scenario.cluster, scenario.env, reward_scale=None)
        obs = env.reset(seed=request.seed)
        env_id = registry.create(env, scenario)
        return schemas.CreateEnvResponse(
            env_id=env_id,
            api_version=ENV_API_VERSION,
            scenario=scenario.name,
            dims=_dims(env),
            baseline_actions=_flat_baseline(env),
            observations=_flat_obs(obs),
        )

    @app.get("/v1/envs/{env_id}", response_model=schemas.EnvInfoResponse)
    def env_info(env_id: str):
        env, scenario = registry.get(env_id)
        return schemas.EnvInfoResponse(
            env_id=env_id, scenario=scenario.name, t=env.t, done=env.done,
            dims=_dims(env),
        )

    @app.post("/v1/envs/{env_id}/reset", response_model=schemas.ResetResponse)
    def reset_env(env_id: str, request: schemas.ResetRequest):
        env, _ = registry.get(env_id)
        obs = env.reset(seed=request.seed)
        return schemas.ResetResponse(observations=_flat_obs(obs))

    @app.post("/v1/envs/{env_id}/step", response_model=schemas.StepResponse)
    def step_env(env_id: str, actions: schemas.FlatActions):
        env, _ = registry.get(env_id)
        raw = _raw_from_flat(env, actions)
        obs, rewards, done, report = env.step(raw)
        return schemas.StepResponse(
            observations=_flat_obs(obs),
            rewards=schemas.Rewards(
                top=float(rewards["top"]),
                low=[float(x) for x in rewards["low"]],
                cooling=[float(x) for x in rewards["cooling"]],
            ),
            done=done,
            info=_report_dict(report),
        )

    @app.delete("/v1/envs/{env_id}", response_model=schemas.CloseResponse)
    def close_env(env_id: str):
        if not registry.close(env_id):
            raise KeyError(env_id)
        return schemas.CloseResponse(env_id=env_id, closed=True)

    @app.post("/v1/rollout", response_model=schemas.RolloutResponse)
    def rollout(request: schemas.RolloutRequest):
        from ..control.policies import greedy_policy

        scenario = load_scenario(request.scenario)
        env = HierEnv(scenario.cluster, scenario.env, reward_scale=None)
        obs = env.reset(seed=request.seed)
        if request.policy == "baseline":
            policy_fn = None
        elif request.policy == "greedy":
            policy_fn = lambda o: greedy_policy(o, scenario.cluster)
        else:
            raise DomainError(f"unknown rollout policy {request.policy!r}")

        rewards_top = []
        co2_per_step = []
        observations = [_flat_obs(obs)] if request.include_observations else None
        done = False
        while not done:
            raw = policy_fn(obs) if policy_fn is not None else None
            obs, rewards, done, report = env.step(raw)
            rewards_top.append(float(rewards["top"]))
            co2_per_step.append(report.total_co2_kg)
            if request.include_observations:
                observations.append(_flat_obs(obs))
        return schemas.RolloutResponse(
            scenario=scenario.name,
            policy=request.policy,
            steps=len(co2_per_step),
            total_co2_kg=env.ledger.total_co2_kg,
            reward_scale=env.reward_scale,
            rewards_top=rewards_top,
            co2_per_step=co2_per_step,
            observations=observations,
        )

    return app


app = create_app()
