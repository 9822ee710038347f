"""Exhaustive optimum over a discretized action grid for tiny scenarios.

The grid keeps the joint per-step action space small enough to enumerate:
the top level picks one of {origin, uniform, all-to-greenest}; defer and
cooling are cluster-wide toggles {0, 1} and {open-loop, eco}. Depth-first
branch-and-bound with an admissible idle-carbon floor makes full enumeration
cheap on the bundled 2-DC/6-step scenarios.

Controllers compared against the oracle must act on the same grid, so
``snap_to_grid`` projects any decoded action onto its nearest grid point and
``evaluate_on_grid`` runs a policy through that projection. Every trajectory a
snapped controller can produce is inside the oracle's search space, which
makes the oracle a true lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..cluster import (
    ClusterConfig,
    ClusterState,
    HierAction,
    cluster_step,
    initial_cluster_state,
)
from ..dcmodel import CoolingAction, open_loop_action
from ..envs import EnvConfig, HierEnv
from ..errors import SearchSpaceTooLarge

TOP_CHOICES = ("origin", "uniform", "greenest")
DEFER_CHOICES = (0.0, 1.0)
COOLING_CHOICES = ("openloop", "eco")

NODE_BUDGET = 10_000_000


def eco_action(dc) -> CoolingAction:
    """Low-energy cooling point: half pump, warmest setpoint, valves open."""
    return CoolingAction(0.5, dc.setpoint_hi, (1.0,) * dc.n_blade_groups)


def _top_weights(choice: str, cfg: ClusterConfig, t: int):
    n = cfg.n_dcs
    if choice == "origin":
        return None
    if choice == "uniform":
        return (1.0 / n,) * n
    if choice == "greenest":
        ci = [cfg.traces[i].carbon_intensity.value_at(t) for i in range(n)]
        best = min(range(n), key=lambda i: (ci[i], i))
        return tuple(1.0 if i == best else 0.0 for i in range(n))
    raise ValueError(f"unknown top choice {choice!r}")


def grid_action(cfg: ClusterConfig, t: int, top: str, defer: float,
                cooling: str) -> HierAction:
    n = cfg.n_dcs
    cool = tuple(
        open_loop_action(dc) if cooling == "openloop" else eco_action(dc)
        for dc in cfg.dc_configs
    )
    return HierAction(
        top_weights=_top_weights(top, cfg, t),
        defer_fraction=(defer,) * n,
        release_fraction=(1.0 - defer,) * n,
        cooling=cool,
    )


def grid_choices(top_choices=TOP_CHOICES, defer_choices=DEFER_CHOICES,
                 cooling_choices=COOLING_CHOICES):
    return [
        (top, defer, cooling)
        for top in top_choices
        for defer in defer_choices
        for cooling in cooling_choices
    ]


def _co2_floors(cfg: ClusterConfig) -> list[float]:
    """Admissible per-step CO2 lower bound: idle IT energy at local intensity."""
    floors = []
    to_kwh = cfg.step_seconds / 3.6e6
    for t in range(cfg.episode_steps):
        floor = 0.0
        for i, dc in enumerate(cfg.dc_configs):
            idle_kwh = dc.n_servers * dc.p_idle_w * to_kwh
            floor += idle_kwh * cfg.traces[i].carbon_intensity.value_at(t) / 1000.0
        floors.append(floor)
    return floors


def _constant_sequence_co2(cfg: ClusterConfig, choice) -> float:
    state = initial_cluster_state(cfg)
    total = 0.0
    for t in range(cfg.episode_steps):
        action = grid_action(cfg, t, *choice)
        state, report = cluster_step(state, action, t, cfg)
        total += report.total_co2_kg
    return total


def brute_force_optimum(cfg: ClusterConfig, node_budget: int = NODE_BUDGET,
                        top_choices=TOP_CHOICES, defer_choices=DEFER_CHOICES,
                        cooling_choices=COOLING_CHOICES):
    """Exact minimum-CO2 action sequence over the discretized grid.

    Returns (best choice sequence, best episode CO2). Raises
    SearchSpaceTooLarge when the full enumeration would exceed the budget.
    """
    choices = grid_choices(top_choices, defer_choices, cooling_choices)
    steps = cfg.episode_steps
    if len(choices) ** steps > node_budget:
        raise SearchSpaceTooLarge(
            f"{len(choices)}^{steps} sequences exceed the {node_budget:.0e} budget"
        )

    floors = _co2_floors(cfg)
    suffix = [0.0] * (steps + 1)
    for t in range(steps - 1, -1, -1):
        suffix[t] = suffix[t + 1] + floors[t]

    # Seed the incumbent with the best constant sequence so pruning is live
    # from the first node on.
    seeded = min(choices, key=lambda c: _constant_sequence_co2(cfg, c))
    best_co2 = _constant_sequence_co2(cfg, seeded)
    best_seq: list[tuple] = [seeded] * steps

    def dfs(state: ClusterState, t: int, partial: float, seq: list):
        nonlocal best_co2, best_seq
        if t == steps:
            if partial < best_co2:
                best_co2 = partial
                best_seq = list(seq)
            return
        children = []
        for choice in choices:
            action = grid_action(cfg, t, *choice)
            child_state, report = cluster_step(state, action, t, cfg)
            children.append((partial + report.total_co2_kg, choice, child_state))
        children.sort(key=lambda c: c[0])
        for child_co2, choice, child_state in children:
            if child_co2 + suffix[t + 1] > best_co2 + 1e-12:
                break  # children are sorted; the rest only get worse
            seq.append(choice)
            dfs(child_state, t + 1, child_co2, seq)
            seq.pop()

    dfs(initial_cluster_state(cfg), 0, 0.0, [])
    return best_seq, best_co2


@dataclass(frozen=True)
class SnapContext:
    """Per-step data needed to express grid choices as concrete weights."""

    cfg: ClusterConfig
    t: int


def snap_to_grid(action: HierAction, cfg: ClusterConfig, t: int):
    """Project a decoded action onto the nearest grid point.

    Returns (choice tuple, grid HierAction). The top weights compare in L2
    against the three candidates; defer and cooling snap on cluster means.
    """
    n = cfg.n_dcs
    if action.top_weights is None:
        top_choice = "origin"
    else:
        arrivals = [
            cfg.traces[i].workload.value_at(t) * cfg.capacity_units(i)
            for i in range(n)
        ]
        total = sum(arrivals)
        origin_w = (
            [a / total for a in arrivals] if total > 0 else [1.0 / n] * n
        )
        candidates = {
            "origin": origin_w,
            "uniform": [1.0 / n] * n,
            "greenest": list(_top_weights("greenest", cfg, t)),
        }
        def dist(w):
            return sum((a - b) ** 2 for a, b in zip(action.top_weights, w))
        top_choice = min(TOP_CHOICES, key=lambda c: (dist(candidates[c]),
                                                     TOP_CHOICES.index(c)))
    defer_mean = sum(action.defer_fraction) / n
    defer_choice = 1.0 if defer_mean >= 0.5 else 0.0

    pump_mean = sum(c.pump_speed for c in action.cooling) / n
    sp_mean = sum(
        (c.coolant_setpoint_c - dc.setpoint_lo) / (dc.setpoint_hi - dc.setpoint_lo)
        for c, dc in zip(action.cooling, cfg.dc_configs)
    ) / n
    d_open = (pump_mean - 1.0) ** 2 + sp_mean ** 2
    d_eco = (pump_mean - 0.5) ** 2 + (sp_mean - 1.0) ** 2
    cool_choice = "openloop" if d_open <= d_eco else "eco"

    choice = (top_choice, defer_choice, cool_choice)
    return choice, grid_action(cfg, t, *choice)


def evaluate_on_grid(policy_fn, cfg: ClusterConfig, env_cfg: EnvConfig):
    """Run a raw-action policy with every action snapped to the oracle grid.

    Returns (episode CO2, list of grid choices taken).
    """
    from ..envs import decode_cooling, decode_low, decode_top

    env = HierEnv(cfg, env_cfg, reward_scale=1.0)
    obs = env.reset(seed=0)
    choices = []
    for t in range(cfg.episode_steps):
        raw = policy_fn(obs)
        top = decode_top(raw.get("top"), cfg.n_dcs)
        defer, rel = decode_low(raw["low"], cfg.n_dcs) if raw.get("low") is not None \
            else ((0.0,) * cfg.n_dcs, (1.0,) * cfg.n_dcs)
        cooling = decode_cooling(raw["cooling"], cfg) if raw.get("cooling") is not None \
            else tuple(open_loop_action(dc) for dc in cfg.dc_configs)
        decoded = HierAction(top, defer, rel, cooling)
        choice, snapped = snap_to_grid(decoded, cfg, t)
        choices.append(choice)
        obs, _, done, _ = env.step_hier(snapped)
    return env.ledger.total_co2_kg, choices
