"""Pydantic request/response models for the environment-serving API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    package_version: str
    api_version: str


class ScenarioListResponse(BaseModel):
    scenarios: list[str]


class LevelDims(BaseModel):
    obs_dim: int
    act_dim: int


class EnvDims(BaseModel):
    n_dcs: int
    blade_groups: list[int]
    episode_steps: int
    top: LevelDims
    low: LevelDims
    cooling: LevelDims


class CreateEnvRequest(BaseModel):
    scenario: str = Field(description="bundled scenario name or server-side path")
    seed: int = 0


class FlatActions(BaseModel):
    """Flat per-level action vectors; null selects the level's default."""

    top: list[float] | None = None
    low: list[float] | None = None
    cooling: list[float] | None = None


class Observations(BaseModel):
    top: list[float]
    low: list[float]
    cooling: list[float]


class CreateEnvResponse(BaseModel):
    env_id: str
    api_version: str
    scenario: str
    dims: EnvDims
    baseline_actions: FlatActions
    observations: Observations


class ResetRequest(BaseModel):
    seed: int = 0


class ResetResponse(BaseModel):
    observations: Observations


class Rewards(BaseModel):
    top: float
    low: list[float]
    cooling: list[float]


class StepResponse(BaseModel):
    observations: Observations
    rewards: Rewards
    done: bool
    info: dict


class EnvInfoResponse(BaseModel):
    env_id: str
    scenario: str
    t: int
    done: bool
    dims: EnvDims


class CloseResponse(BaseModel):
    env_id: str
    closed: bool


class RolloutRequest(BaseModel):
    scenario: str
    seed: int = 0
    policy: str = "baseline"
    include_observations: bool = False


class RolloutResponse(BaseModel):
    scenario: str
    policy: str
    steps: int
    total_co2_kg: float
    reward_scale: float
    rewards_top: list[float]
    co2_per_step: list[float]
    observations: list[Observations] | None = None


class ErrorBody(BaseModel):
    error: str
    message: str
