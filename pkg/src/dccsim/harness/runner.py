"""Episode execution, metrics persistence and run reports.

``metrics.csv`` carries one row per step per DC and is byte-stable across
repeated runs of the same seed (floats are written with shortest round-trip
formatting). ``summary.json`` embeds the resolved scenario, its content hash
and the package versions so every run is auditable from its outputs alone.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .. import ENV_API_VERSION, POLICY_FORMAT, SCHEMA_VERSION, __version__
from ..control.configurations import (
    policy_fn_from_nets,
    run_configuration,
    summarize_ledger,
)
from ..control.nets import load_policy_params, save_policy_params
from ..control.policies import greedy_policy
from ..envs import HierEnv
from .scenario import Scenario, load_scenario

METRICS_COLUMNS = (
    "step",
    "dc",
    "energy_it_kwh",
    "energy_pump_kwh",
    "energy_chiller_kwh",
    "energy_transfer_kwh",
    "co2_kg",
    "utilization",
    "dtq_occupancy",
    "sla_units",
    "overtemp_groups",
)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_rows(ledger, dc_names) -> list[list]:
    rows = []
    for report in ledger.steps:
        for i, name in enumerate(dc_names):
            rows.append([
                report.step,
                name,
                report.energy_it_kwh[i],
                report.energy_pump_kwh[i],
                report.energy_chiller_kwh[i],
                report.energy_transfer_kwh[i],
                report.co2_kg[i],
                report.utilization[i],
                report.dtq_occupancy[i],
                report.sla_units[i],
                report.overtemp_groups[i],
            ])
    return rows


def write_metrics_csv(rows, path) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _base_report(scenario: Scenario, configuration: str) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "scenario": scenario.name,
        "configuration": configuration,
        "versions": {
            "package": __version__,
            "schema": SCHEMA_VERSION,
            "policy_format": POLICY_FORMAT,
            "env_api": ENV_API_VERSION,
        },
        "config": scenario.resolved,
        "config_sha256": scenario.sha256,
    }


def run_policy_episode(scenario: Scenario, policy: str | None = "baseline",
                       nets=None, seed: int = 0):
    """Run one episode under a named policy; returns (ledger, summary).

    ``policy`` is "baseline", "greedy", or None when ``nets`` supplies a
    trained policy.
    """
    env = HierEnv(scenario.cluster, scenario.env, reward_scale=1.0)
    obs = env.reset(seed=seed)
    if nets is not None:
        fn = policy_fn_from_nets(nets)
    elif policy == "greedy":
        fn = lambda o: greedy_policy(o, scenario.cluster)
    elif policy in (None, "baseline"):
        fn = None
    else:
        raise ValueError(f"unknown policy {policy!r}")
    done = False
    while not done:
        raw = fn(obs) if fn is not None else None
        obs, _, done, _ = env.step(raw)
    return env.ledger, summarize_ledger(env.ledger)


def simulate_run(scenario: Scenario, seed: int, out_dir,
                 policy: str = "baseline") -> dict:
    """One episode -> metrics.csv + summary.json in ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    ledger, summary = run_policy_episode(scenario, policy=policy, seed=seed)
    rows = metrics_rows(ledger, scenario.dc_names)
    write_metrics_csv(rows, out_dir / "metrics.csv")

    report = _base_report(scenario, policy)
    report.update({
        "seed": seed,
        "totals": summary.as_dict(),
        "per_dc": [
            {
                "name": name,
                "co2_kg": ledger.co2_kg[i],
                "energy_kwh": {k: ledger.energy_kwh[k][i]
                               for k in ("it", "pump", "chiller", "transfer")},
                "sla_units": ledger.sla_units[i],
                "overtemp_steps": ledger.overtemp_steps[i],
            }
            for i, name in enumerate(scenario.dc_names)
        ],
        "wall_clock_s": time.perf_counter() - started,
    })
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    return report


def train_seed_worker(scenario_path: str, configuration: str, algo: str,
                      seed: int, out_dir: str, total_steps: int | None) -> dict:
    """Train+evaluate one seed; picklable for process-parallel fan-out."""
    from dataclasses import replace

    scenario = load_scenario(scenario_path)
    train_cfg = scenario.train
    if algo:
        train_cfg = replace(train_cfg, algo=algo)
    if total_steps:
        train_cfg = replace(train_cfg, total_steps=total_steps)
    result = run_configuration(configuration, scenario.cluster, scenario.env,
                               train_cfg, [seed])
    seed_dir = Path(out_dir) / f"seed_{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    nets = result.nets_per_seed[0]
    if nets:
        save_policy_params(nets, seed_dir / "policy.bin")
    logs = result.logs_per_seed[0]
    with open(seed_dir / "training_log.json", "w", encoding="utf-8") as fh:
        json.dump([log.as_dicts() for log in logs], fh, indent=1)
    return {
        "seed": seed,
        "co2_kg": result.per_seed_co2[0],
        "summary": result.per_seed_summary[0].as_dict(),
        "diverged": result.diverged,
    }


def train_run(scenario: Scenario, scenario_path: str, configuration: str,
              seeds, out_dir, algo: str = "", total_steps: int | None = None,
              max_workers: int = 1) -> dict:
    """Run a training configuration over seeds; persists report + policies."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    seeds = list(seeds)

    if max_workers > 1 and len(seeds) > 1 and configuration != "baseline":
        import concurrent.futures as futures
        import multiprocessing as mp

        ctx = mp.get_context("spawn")
        with futures.ProcessPoolExecutor(
            max_workers=min(max_workers, len(seeds)), mp_context=ctx
        ) as pool:
            jobs = [
                pool.submit(train_seed_worker, str(scenario_path), configuration,
                            algo, seed, str(out_dir), total_steps)
                for seed in seeds
            ]
            per_seed = [job.result() for job in jobs]
    else:
        per_seed = [
            train_seed_worker(str(scenario_path), configuration, algo, seed,
                              str(out_dir), total_steps)
            for seed in seeds
        ]

    co2 = [entry["co2_kg"] for entry in per_seed]
    report = _base_report(scenario, configuration)
    report.update({
        "algo": algo or scenario.train.algo,
        "seeds": seeds,
        "per_seed": per_seed,
        "per_seed_co2_kg": co2,
        "mean_co2_kg": float(np.mean(co2)),
        "std_co2_kg": float(np.std(co2, ddof=1)) if len(co2) > 1 else 0.0,
        "diverged": any(entry["diverged"] for entry in per_seed),
        "wall_clock_s": time.perf_counter() - started,
    })
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    return report


def evaluate_run(scenario: Scenario, policy_path, out_dir, seed: int = 0) -> dict:
    """Evaluate a stored policy file on a scenario; writes the usual outputs."""
    nets = load_policy_params(Path(policy_path))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    ledger, summary = run_policy_episode(scenario, policy=None, nets=nets,
                                         seed=seed)
    write_metrics_csv(metrics_rows(ledger, scenario.dc_names),
                      out_dir / "metrics.csv")
    report = _base_report(scenario, "evaluate")
    report.update({
        "seed": seed,
        "policy_file": str(policy_path),
        "totals": summary.as_dict(),
        "wall_clock_s": time.perf_counter() - started,
    })
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    return report
