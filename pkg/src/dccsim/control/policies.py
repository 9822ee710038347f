"""Non-learning controllers: the fixed baseline and a carbon-greedy heuristic."""

from __future__ import annotations

import numpy as np

from ..cluster import ClusterConfig
from ..envs import LOW_FEATURES, TOP_FEATURES_PER_DC, baseline_raw_actions
from ..errors import DomainError

# Cooling lookup keyed by utilization bucket: conservative pump/setpoint pairs
# that hold blade temperatures under the CPU limit with margin for one-step
# load swings. Columns: utilization upper bound, pump speed, setpoint fraction
# of the actuator range (0 == coldest).
COOLING_BUCKETS = (
    (0.2, 0.35, 1.00),
    (0.4, 0.45, 0.75),
    (0.6, 0.60, 0.50),
    (0.8, 0.75, 0.25),
    (1.0 + 1e-9, 0.90, 0.00),
)


def cooling_bucket(utilization: float) -> tuple[float, float]:
    for upper, pump, sp_frac in COOLING_BUCKETS:
        if utilization <= upper:
            return pump, sp_frac
    return COOLING_BUCKETS[-1][1], COOLING_BUCKETS[-1][2]


def baseline_policy(obs: dict, cfg: ClusterConfig) -> dict:
    """No shifting, no deferral, open-loop cooling. Stateless."""
    return baseline_raw_actions(cfg)


def greedy_policy(obs: dict, cfg: ClusterConfig, beta: float = 4.0,
                  q: float = 0.5) -> dict:
    """Carbon-greedy heuristic for all three levels.

    Top weights are a softmax over -beta * normalized carbon intensity; a DC
    defers its flexible load whenever the current intensity sits at or above
    the q-quantile of {now, next 4 forecast values}; cooling follows the
    utilization-bucket lookup.
    """
    if beta < 0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    n = cfg.n_dcs
    top_obs = np.asarray(obs["top"], dtype=np.float64)
    low_obs = np.asarray(obs["low"], dtype=np.float64).reshape(n, LOW_FEATURES)
    cool_obs = np.asarray(obs["cooling"], dtype=np.float64).reshape(n, -1)

    top = [-beta * float(top_obs[TOP_FEATURES_PER_DC * i]) for i in range(n)]

    low = []
    for i in range(n):
        window = low_obs[i, 0:5]  # current plus 4-step forecast, same scale
        threshold = float(np.quantile(window, q))
        defer = 1.0 if low_obs[i, 0] >= threshold - 1e-12 else 0.0
        low.append([defer, 1.0 - defer])

    cooling = []
    for i in range(n):
        utilization = (float(cool_obs[i, 2]) + 1.0) / 2.0
        pump, sp_frac = cooling_bucket(utilization)
        cooling.append([pump, sp_frac] + [1.0] * cfg.dc_configs[i].n_blade_groups)

    return {"top": top, "low": low, "cooling": cooling}
