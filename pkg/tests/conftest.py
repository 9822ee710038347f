"""Shared builders for cluster fixtures used across the test suite."""

import numpy as np
import pytest

from dccsim.cluster import ClusterConfig, DcTraces
from dccsim.dcmodel import DcConfig
from dccsim.traces import SynthParams, TimeTrace, TraceKind, synth_trace


def constant_trace(kind, value, length, step_seconds=900):
    return TimeTrace(kind, None, step_seconds, np.full(length, float(value)))


def make_dc_config(**overrides):
    base = dict(
        n_servers=100,
        p_idle_w=100.0,
        p_peak_w=350.0,
        n_blade_groups=2,
        heat_capacity_j_per_k=2.0e6,
        h0_w_per_k=900.0,
        pump_p_max_w=3000.0,
        flow_max_kg_s=8.0,
        coolant_setpoint_range_c=(18.0, 32.0),
    )
    base.update(overrides)
    return DcConfig(**base)


def make_traces(ci=400.0, ambient=22.0, workload=0.5, length=64, seed=None):
    """Constant traces by default; pass seed for sinusoid-plus-noise ones."""
    if seed is None:
        return DcTraces(
            carbon_intensity=constant_trace(TraceKind.CARBON_INTENSITY, ci, length),
            ambient_temp=constant_trace(TraceKind.AMBIENT_TEMP, ambient, length),
            workload=constant_trace(TraceKind.WORKLOAD, workload, length),
        )
    return DcTraces(
        carbon_intensity=synth_trace(
            TraceKind.CARBON_INTENSITY, seed,
            SynthParams(mean=ci, amplitude=ci * 0.4, period_steps=32,
                        noise_std=ci * 0.05, length=length),
        ),
        ambient_temp=synth_trace(
            TraceKind.AMBIENT_TEMP, seed + 1,
            SynthParams(mean=ambient, amplitude=4.0, period_steps=32,
                        noise_std=0.5, length=length),
        ),
        workload=synth_trace(
            TraceKind.WORKLOAD, seed + 2,
            SynthParams(mean=workload, amplitude=0.2, period_steps=32,
                        noise_std=0.03, length=length),
        ),
    )


def make_cluster_config(n_dcs=2, episode_steps=32, trace_list=None,
                        dc_overrides=None, **overrides):
    if trace_list is None:
        trace_list = [make_traces(length=max(episode_steps, 8)) for _ in range(n_dcs)]
    dc_overrides = dc_overrides or {}
    dcs = tuple(make_dc_config(**dc_overrides) for _ in range(n_dcs))
    distance = tuple(
        tuple(0.0 if i == j else 1000.0 for j in range(n_dcs)) for i in range(n_dcs)
    )
    base = dict(
        dc_names=tuple(f"dc{i}" for i in range(n_dcs)),
        dc_configs=dcs,
        traces=tuple(trace_list),
        distance_km=distance,
        transfer_cap_units=1e9,
        kappa_kwh_per_unit_km=2e-6,
        flexible_fraction=0.6,
        task_granularity_units=5.0,
        episode_steps=episode_steps,
        max_defer_steps=8,
    )
    base.update(overrides)
    return ClusterConfig(**base)


@pytest.fixture
def two_dc_cluster():
    return make_cluster_config(n_dcs=2)


@pytest.fixture
def three_dc_cluster():
    return make_cluster_config(n_dcs=3)


def run_random_conservation_case(case_seed: int) -> dict:
    """One randomized scenario + random policy episode, with load accounting.

    Returns the measured quantities the conservation invariants constrain.
    """
    import random

    from dccsim.cluster import HierAction, cluster_step, initial_cluster_state
    from dccsim.dcmodel import CoolingAction

    rng = random.Random(case_seed)
    n = rng.choice([1, 2, 3])
    steps = 16
    traces = [
        make_traces(
            ci=rng.uniform(100, 800),
            ambient=rng.uniform(10, 30),
            workload=rng.uniform(0.2, 0.9),
            length=steps,
            seed=case_seed * 10 + i if rng.random() < 0.7 else None,
        )
        for i in range(n)
    ]
    cfg = make_cluster_config(
        n_dcs=n,
        episode_steps=steps,
        trace_list=traces,
        flexible_fraction=rng.uniform(0.0, 1.0),
        transfer_cap_units=rng.choice([0.5, 5.0, 1e9]),
        task_granularity_units=rng.choice([1.0, 5.0, 17.3]),
        max_defer_steps=rng.choice([0, 1, 4, 8]),
    )

    def random_action():
        if rng.random() < 0.3:
            weights = None
        else:
            raw = [rng.random() + 1e-6 for _ in range(n)]
            total = sum(raw)
            weights = tuple(x / total for x in raw)
        cooling = tuple(
            CoolingAction.clamped(
                rng.random(), 18.0 + 14.0 * rng.random(),
                [rng.random() for _ in range(dc.n_blade_groups)], dc,
            )
            for dc in cfg.dc_configs
        )
        return HierAction(
            top_weights=weights,
            defer_fraction=tuple(rng.random() for _ in range(n)),
            release_fraction=tuple(rng.random() for _ in range(n)),
            cooling=cooling,
        )

    state = initial_cluster_state(cfg)
    arrived = 0.0
    executed = 0.0
    window_violations = 0
    occupancy_ok = True
    ledger_total = 0.0
    step_co2 = []
    for t in range(steps):
        state, report = cluster_step(state, random_action(), t, cfg)
        arrived += sum(report.arrivals)
        executed += sum(report.executed)
        window_violations += report.window_violations
        for i in range(n):
            if report.dtq_occupancy[i] > cfg.dtq_capacity_units[i] + 1e-9:
                occupancy_ok = False
        ledger_total += report.total_co2_kg
        step_co2.append(report.total_co2_kg)
    recomputed = 0.0
    for value in step_co2:
        recomputed += value
    return {
        "arrived": arrived,
        "executed": executed,
        "window_violations": window_violations,
        "occupancy_ok": occupancy_ok,
        "queues_drained": all(len(q) == 0 for q in state.queues),
        "ledger_total": ledger_total,
        "ledger_recomputed": recomputed,
    }
