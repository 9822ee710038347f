"""Hierarchical control environment over the cluster simulator.

Three agent levels share one simulation: a top-level dispatcher that re-weights
the cluster's flexible load pool (acting every ``latch_period`` steps, latched
in between), a per-DC temporal shifter (defer/release fractions), and a per-DC
cooling controller. Raw actions are plain real vectors; decoding is total, so
any finite input produces a valid joint action.

Rewards are cooperative but local: the top level sees cluster CO2, the low
level its DC's CO2 plus an SLA penalty, the cooling level its DC's cooling CO2
plus an overtemperature penalty. Everything is scaled by the mean per-step CO2
of the baseline policy on the same scenario so |reward| stays near 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cluster import (
    ClusterConfig,
    ClusterState,
    EmissionsLedger,
    HierAction,
    StepReport,
    cluster_step,
    initial_cluster_state,
)
from .dcmodel import CoolingAction, open_loop_action
from .errors import ConfigError, DomainError, EpisodeFinished
from .traces import forecast_window

LEVELS = ("top", "low", "cooling")

TOP_FEATURES_PER_DC = 9
TOP_TIME_FEATURES = 4
LOW_FEATURES = 10
COOLING_FEATURES = 6


@dataclass(frozen=True)
class EnvConfig:
    """Knobs of the hierarchical environment that are not cluster physics."""

    latch_period: int = 4
    forecast_steps: int = 4
    lambda_sla: float = 10.0
    lambda_temp: float = 1.0
    reward_scale: float | None = None

    def __post_init__(self):
        if self.latch_period < 1:
            raise ConfigError("latch_period must be >= 1")
        if self.forecast_steps < 1:
            raise ConfigError("forecast_steps must be >= 1")


@dataclass(frozen=True)
class NormScales:
    """Fixed scenario-level affine scales mapping raw signals to ~[-1, 1]."""

    ci_center: float
    ci_half: float
    ambient_center: float
    ambient_half: float
    temp_center: float
    temp_half: float

    def as_dict(self) -> dict:
        return {
            "ci_center": self.ci_center,
            "ci_half": self.ci_half,
            "ambient_center": self.ambient_center,
            "ambient_half": self.ambient_half,
            "temp_center": self.temp_center,
            "temp_half": self.temp_half,
        }


def derive_norm_scales(cfg: ClusterConfig) -> NormScales:
    """Scenario-level normalization constants, derived once from the traces."""
    ci_lo = min(float(tr.carbon_intensity.values.min()) for tr in cfg.traces)
    ci_hi = max(float(tr.carbon_intensity.values.max()) for tr in cfg.traces)
    am_lo = min(float(tr.ambient_temp.values.min()) for tr in cfg.traces)
    am_hi = max(float(tr.ambient_temp.values.max()) for tr in cfg.traces)
    t_lo = min(dc.setpoint_lo for dc in cfg.dc_configs)
    t_hi = max(dc.cpu_temp_limit_c for dc in cfg.dc_configs)
    half = lambda lo, hi: max((hi - lo) / 2.0, 1e-9)
    return NormScales(
        ci_center=(ci_lo + ci_hi) / 2.0,
        ci_half=half(ci_lo, ci_hi),
        ambient_center=(am_lo + am_hi) / 2.0,
        ambient_half=half(am_lo, am_hi),
        temp_center=(t_lo + t_hi) / 2.0,
        temp_half=half(t_lo, t_hi),
    )


def softmax(logits) -> list[float]:
    m = max(logits)
    exps = [math.exp(x - m) for x in logits]
    total = sum(exps)
    return [e / total for e in exps]


def _clamp01(x: float) -> float:
    if not math.isfinite(x):
        raise DomainError(f"raw actions must be finite, got {x}")
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def decode_top(raw, n_dcs: int):
    """Softmax-decode top-level logits; None selects origin dispatch."""
    if raw is None:
        return None
    raw = [float(x) for x in raw]
    if len(raw) != n_dcs:
        raise DomainError(f"top action needs {n_dcs} logits, got {len(raw)}")
    if not all(math.isfinite(x) for x in raw):
        raise DomainError("top logits must be finite")
    return tuple(softmax(raw))

def decode_low(raw, n_dcs: int):
    """Clamp per-DC (defer_fraction, release_fraction) pairs into [0, 1]."""
    arr = np.asarray(raw, dtype=np.float64).reshape(n_dcs, 2)
    defer = tuple(_clamp01(float(x)) for x in arr[:, 0])
    release = tuple(_clamp01(float(x)) for x in arr[:, 1])
    return defer, release


def decode_cooling(raw, cfg: ClusterConfig):
    """Affine-map per-DC [0,1] reals onto (pump, setpoint, valves) ranges."""
    actions = []
    flat = np.asarray(raw, dtype=np.float64).ravel()
    pos = 0
    for dc in cfg.dc_configs:
        width = 2 + dc.n_blade_groups
        chunk = flat[pos:pos + width]
        if chunk.size != width:
            raise DomainError("cooling action vector too short")
        pos += width
        pump = _clamp01(float(chunk[0]))
        sp_frac = _clamp01(float(chunk[1]))
        setpoint = dc.setpoint_lo + sp_frac * (dc.setpoint_hi - dc.setpoint_lo)
        valves = [_clamp01(float(v)) for v in chunk[2:]]
        actions.append(CoolingAction.clamped(pump, setpoint, valves, dc))
    if pos != flat.size:
        raise DomainError(f"cooling action vector has {flat.size} entries, expected {pos}")
    return tuple(actions)


def baseline_hier_action(cfg: ClusterConfig) -> HierAction:
    """No shifting, no deferral, open-loop cooling: the industry default."""
    n = cfg.n_dcs
    return HierAction(
        top_weights=None,
        defer_fraction=(0.0,) * n,
        release_fraction=(1.0,) * n,
        cooling=tuple(open_loop_action(dc) for dc in cfg.dc_configs),
    )


def baseline_raw_actions(cfg: ClusterConfig) -> dict:
    """Raw-action encoding of the baseline (useful over the service boundary)."""
    low = [[0.0, 1.0] for _ in range(cfg.n_dcs)]
    cooling = [[1.0, 0.0] + [1.0] * dc.n_blade_groups for dc in cfg.dc_configs]
    return {"top": None, "low": low, "cooling": cooling}


def baseline_mean_step_co2(cfg: ClusterConfig) -> float:
    """Mean per-step cluster CO2 of the baseline policy; the reward scale."""
    state = initial_cluster_state(cfg)
    action = baseline_hier_action(cfg)
    total = 0.0
    for t in range(cfg.episode_steps):
        state, report = cluster_step(state, action, t, cfg)
        total += report.total_co2_kg
    return total / cfg.episode_steps


class HierEnv:
    """Gym-style environment exposing the three-level control problem.

    One instance owns one trajectory; create several instances for batched
    rollouts (configs and traces are shared read-only).
    """

    def __init__(self, cfg: ClusterConfig, env_cfg: EnvConfig = EnvConfig(),
                 masked_levels: tuple[str, ...] = (),
                 reward_scale: float | None = None):
        for level in masked_levels:
            if level not in LEVELS:
                raise ConfigError(f"unknown level {level!r}")
        self.cfg = cfg
        self.env_cfg = env_cfg
        self.masked_levels = frozenset(masked_levels)
        self.scales = derive_norm_scales(cfg)
        self.episode_steps = cfg.episode_steps
        scale = reward_scale if reward_scale is not None else env_cfg.reward_scale
        if scale is None:
            scale = baseline_mean_step_co2(cfg)
        if scale <= 0:
            raise ConfigError("reward scale must be positive")
        self.reward_scale = scale

        if env_cfg.forecast_steps != 4:
            raise ConfigError("the observation layout pins 4 forecast features")

        self._state: ClusterState | None = None
        self._t = 0
        self._done = True
        self._latched_weights = None
        self._last_report: StepReport | None = None
        self._applied_cooling = tuple(open_loop_action(dc) for dc in cfg.dc_configs)
        self.ledger = EmissionsLedger(cfg.n_dcs)
        self._seed = 0

    # ---- dimensions -----------------------------------------------------

    @property
    def n_dcs(self) -> int:
        return self.cfg.n_dcs

    @property
    def t(self) -> int:
        return self._t

    @property
    def done(self) -> bool:
        return self._done

    def obs_dims(self) -> dict:
        n = self.n_dcs
        return {
            "top": TOP_FEATURES_PER_DC * n + TOP_TIME_FEATURES,
            "low": LOW_FEATURES * n,
            "cooling": COOLING_FEATURES * n,
        }

    def act_dims(self) -> dict:
        n = self.n_dcs
        cool = sum(2 + dc.n_blade_groups for dc in self.cfg.dc_configs)
        return {"top": n, "low": 2 * n, "cooling": cool}

    # ---- episode protocol ----------------------------------------------

    def reset(self, seed: int = 0) -> dict:
        """Start a fresh episode; deterministic given (config, seed)."""
        self._seed = seed
        self._state = initial_cluster_state(self.cfg)
        self._t = 0
        self._done = False
        self._latched_weights = None
        self._last_report = None
        self._applied_cooling = tuple(open_loop_action(dc) for dc in self.cfg.dc_configs)
        self.ledger = EmissionsLedger(self.cfg.n_dcs)
        return self._observations()

    def step(self, raw_actions: dict | None):
        """Advance one step. Returns (obs, rewards, done, info)."""
        if self._done or self._state is None:
            raise EpisodeFinished("episode is over; call reset() first")
        raw_actions = raw_actions or {}
        action = self._decode(raw_actions)
        return self._advance(action)

    def step_hier(self, action: HierAction):
        """Advance with an already-decoded action, bypassing decode/latching.

        Used by the brute-force oracle and by discretized-action evaluation,
        where actions come from an explicit grid rather than raw vectors.
        """
        if self._done or self._state is None:
            raise EpisodeFinished("episode is over; call reset() first")
        return self._advance(action)

    def _advance(self, action: HierAction):
        self._applied_cooling = action.cooling
        self._state, report = cluster_step(self._state, action, self._t, self.cfg)
        self.ledger.record(report)
        self._last_report = report
        self._t += 1
        self._done = self._t >= self.episode_steps
        rewards = self._rewards(report)
        return self._observations(), rewards, self._done, report

    # ---- internals ------------------------------------------------------

    def _decode(self, raw: dict) -> HierAction:
        n = self.n_dcs
        if "top" in self.masked_levels:
            top_raw = None
        else:
            top_raw = raw.get("top")
        if self._t % self.env_cfg.latch_period == 0:
            self._latched_weights = decode_top(top_raw, n)
        weights = self._latched_weights

        low_raw = None if "low" in self.masked_levels else raw.get("low")
        if low_raw is None:
            defer, release = (0.0,) * n, (1.0,) * n
        else:
            defer, release = decode_low(low_raw, n)

        cool_raw = None if "cooling" in self.masked_levels else raw.get("cooling")
        if cool_raw is None:
            cooling = tuple(open_loop_action(dc) for dc in self.cfg.dc_configs)
        else:
            cooling = decode_cooling(cool_raw, self.cfg)

        return HierAction(top_weights=weights, defer_fraction=defer,
                          release_fraction=release, cooling=cooling)

    def _rewards(self, report: StepReport) -> dict:
        scale = self.reward_scale
        lam_sla = self.env_cfg.lambda_sla
        lam_temp = self.env_cfg.lambda_temp
        n = self.n_dcs
        r_top = -report.total_co2_kg / scale
        r_low = np.empty(n, dtype=np.float64)
        r_cool = np.empty(n, dtype=np.float64)
        for i in range(n):
            r_low[i] = -(report.co2_kg[i] + lam_sla * report.sla_units[i]) / scale
            cooling_kwh = report.energy_pump_kwh[i] + report.energy_chiller_kwh[i]
            cool_co2 = cooling_kwh * report.ci[i] / 1000.0
            r_cool[i] = -(cool_co2 + lam_temp * report.overtemp_groups[i]) / scale
        return {"top": r_top, "low": r_low, "cooling": r_cool}

    def _observations(self) -> dict:
        cfg = self.cfg
        sc = self.scales
        n = self.n_dcs
        t = min(self._t, self.episode_steps - 1)
        k = self.env_cfg.forecast_steps
        report = self._last_report

        hour_angle = 2.0 * math.pi * ((t * cfg.step_seconds / 3600.0) % 24.0) / 24.0
        dow_angle = 2.0 * math.pi * ((t * cfg.step_seconds / 86400.0) % 7.0) / 7.0

        top = np.empty(TOP_FEATURES_PER_DC * n + TOP_TIME_FEATURES, dtype=np.float64)
        low = np.empty((n, LOW_FEATURES), dtype=np.float64)
        cool = np.empty((n, COOLING_FEATURES), dtype=np.float64)

        for i in range(n):
            tr = cfg.traces[i]
            ci_now = (tr.carbon_intensity.value_at(t) - sc.ci_center) / sc.ci_half
            ci_fc = (forecast_window(tr.carbon_intensity, t, k) - sc.ci_center) / sc.ci_half
            ambient = (tr.ambient_temp.value_at(t) - sc.ambient_center) / sc.ambient_half
            capacity = cfg.capacity_units(i)

            if report is None:
                util = 0.0
                executed = 0.0
                occupancy = 0.0
                assigned = 0.0
            else:
                util = report.utilization[i]
                executed = report.executed[i]
                occupancy = report.dtq_occupancy[i]
                assigned = report.assigned[i]
            headroom = max(0.0, capacity - executed) / capacity
            occ_norm = occupancy / cfg.dtq_capacity_units[i]

            base = TOP_FEATURES_PER_DC * i
            top[base] = ci_now
            top[base + 1:base + 1 + k] = ci_fc[:k]
            top[base + 5] = 2.0 * util - 1.0
            top[base + 6] = 2.0 * headroom - 1.0
            top[base + 7] = ambient
            top[base + 8] = 2.0 * occ_norm - 1.0

            low[i, 0] = ci_now
            low[i, 1:1 + k] = ci_fc[:k]
            low[i, 5] = 2.0 * util - 1.0
            low[i, 6] = 2.0 * occ_norm - 1.0
            low[i, 7] = 2.0 * (assigned / capacity) - 1.0
            low[i, 8] = math.sin(hour_angle)
            low[i, 9] = math.cos(hour_angle)

            state = self._state.dc_states[i]
            temps = state.group_temps_c
            cool[i, 0] = (max(temps) - sc.temp_center) / sc.temp_half
            cool[i, 1] = (sum(temps) / len(temps) - sc.temp_center) / sc.temp_half
            cool[i, 2] = 2.0 * util - 1.0
            cool[i, 3] = ambient
            dc = cfg.dc_configs[i]
            applied = self._applied_cooling[i]
            setpoint = applied.coolant_setpoint_c
            pump = applied.pump_speed
            sp_frac = (setpoint - dc.setpoint_lo) / (dc.setpoint_hi - dc.setpoint_lo)
            cool[i, 4] = 2.0 * sp_frac - 1.0
            cool[i, 5] = 2.0 * pump - 1.0

        base = TOP_FEATURES_PER_DC * n
        top[base] = math.sin(hour_angle)
        top[base + 1] = math.cos(hour_angle)
        top[base + 2] = math.sin(dow_angle)
        top[base + 3] = math.cos(dow_angle)

        return {"top": top, "low": low, "cooling": cool}
