"""Scenario files: one JSON document describing cluster, traces and training.

A scenario fully determines a reproducible experiment: per-DC physical
configuration, trace sources (either synthesized sinusoids with a fixed seed
or CSV files), environment knobs and training defaults. The resolved document
and its SHA-256 content hash are embedded in every output for auditability.

Bundled scenarios live inside the package; their synthetic trace parameters
are calibration-free stand-ins with the qualitative character of real grid,
weather and demand patterns (diurnal periodicity, regional phase offsets),
not fits to any published dataset.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..cluster import ClusterConfig, DcTraces
from ..control.ppo import TrainConfig
from ..dcmodel import DcConfig
from ..envs import EnvConfig
from ..errors import ConfigError
from ..traces import SynthParams, TimeTrace, TraceKind, load_trace

SCHEMA_VERSION = 1

_TRACE_KINDS = {
    "carbon_intensity": TraceKind.CARBON_INTENSITY,
    "ambient_temp": TraceKind.AMBIENT_TEMP,
    "workload": TraceKind.WORKLOAD,
}


@dataclass(frozen=True)
class Scenario:
    name: str
    cluster: ClusterConfig
    env: EnvConfig
    train: TrainConfig
    seeds: tuple[int, ...]
    resolved: dict
    sha256: str

    @property
    def dc_names(self) -> tuple[str, ...]:
        return self.cluster.dc_names


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return mapping[key]


def _build_trace(spec: dict, kind_name: str, step_seconds: int,
                 base_dir: Path, length: int) -> TimeTrace:
    kind = _TRACE_KINDS[kind_name]
    if "synth" in spec:
        p = dict(spec["synth"])
        seed = p.pop("seed", 0)
        params = SynthParams(
            mean=_require(p, "mean", kind_name),
            amplitude=p.get("amplitude", 0.0),
            period_steps=p.get("period_steps", 96),
            noise_std=p.get("noise_std", 0.0),
            length=p.get("length", length),
            step_seconds=step_seconds,
        )
        from ..traces import synth_trace

        return synth_trace(kind, seed, params)
    if "file" in spec:
        path = Path(spec["file"])
        if not path.is_absolute():
            path = base_dir / path
        trace = load_trace(path, kind)
        if trace.step_seconds != step_seconds:
            from ..traces import resample

            trace = resample(trace, step_seconds)
        return trace
    raise ConfigError(f"{kind_name}: trace spec needs either 'synth' or 'file'")


def _build_cluster(doc: dict, base_dir: Path) -> ClusterConfig:
    cluster = _require(doc, "cluster", "scenario")
    dcs = _require(doc, "dcs", "scenario")
    if not dcs:
        raise ConfigError("scenario: 'dcs' must not be empty")
    step_seconds = doc.get("step_seconds", 900)
    episode_steps = _require(doc, "episode_steps", "scenario")

    names, configs, traces = [], [], []
    for entry in dcs:
        names.append(_require(entry, "name", "dc"))
        cfg_fields = dict(_require(entry, "config", f"dc {names[-1]}"))
        if "coolant_setpoint_range_c" in cfg_fields:
            cfg_fields["coolant_setpoint_range_c"] = tuple(
                cfg_fields["coolant_setpoint_range_c"])
        try:
            configs.append(DcConfig(**cfg_fields))
        except TypeError as exc:
            raise ConfigError(f"dc {names[-1]}: bad config fields: {exc}") from exc
        trace_specs = _require(entry, "traces", f"dc {names[-1]}")
        built = {}
        for kind_name in _TRACE_KINDS:
            built[kind_name] = _build_trace(
                _require(trace_specs, kind_name, f"dc {names[-1]} traces"),
                kind_name, step_seconds, base_dir, episode_steps,
            )
        traces.append(DcTraces(
            carbon_intensity=built["carbon_intensity"],
            ambient_temp=built["ambient_temp"],
            workload=built["workload"],
        ))

    n = len(names)
    distance = cluster.get("distance_km")
    if distance is None:
        distance = [[0.0] * n for _ in range(n)]
    dtq_capacity = cluster.get("dtq_capacity_units") or ()

    return ClusterConfig(
        dc_names=tuple(names),
        dc_configs=tuple(configs),
        traces=tuple(traces),
        distance_km=tuple(tuple(float(x) for x in row) for row in distance),
        transfer_cap_units=cluster.get("transfer_cap_units", 1e9),
        kappa_kwh_per_unit_km=cluster.get("kappa_kwh_per_unit_km", 0.0),
        flexible_fraction=cluster.get("flexible_fraction", 0.5),
        task_granularity_units=cluster.get("task_granularity_units", 10.0),
        episode_steps=episode_steps,
        step_seconds=step_seconds,
        max_defer_steps=cluster.get("max_defer_steps", 96),
        dtq_capacity_units=tuple(dtq_capacity),
    )


def _scenario_from_doc(doc: dict, base_dir: Path, source: str) -> Scenario:
    if doc.get("schema") != SCHEMA_VERSION:
        raise ConfigError(
            f"{source}: unsupported schema {doc.get('schema')!r}, "
            f"expected {SCHEMA_VERSION}"
        )
    name = _require(doc, "name", source)
    cluster = _build_cluster(doc, base_dir)
    env_fields = dict(doc.get("env", {}))
    try:
        env_cfg = EnvConfig(**env_fields)
    except TypeError as exc:
        raise ConfigError(f"{source}: bad env fields: {exc}") from exc
    train_fields = dict(doc.get("train", {}))
    if "hidden" in train_fields:
        train_fields["hidden"] = tuple(train_fields["hidden"])
    try:
        train_cfg = TrainConfig(**train_fields)
    except TypeError as exc:
        raise ConfigError(f"{source}: bad train fields: {exc}") from exc
    seeds = tuple(doc.get("seeds", [0]))
    digest = hashlib.sha256(
        json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()
    return Scenario(
        name=name,
        cluster=cluster,
        env=env_cfg,
        train=train_cfg,
        seeds=seeds,
        resolved=doc,
        sha256=digest,
    )


def load_scenario(path) -> Scenario:
    """Load a scenario from a JSON file path or by bundled name."""
    candidate = Path(path)
    if candidate.suffix == ".json" and candidate.exists():
        with open(candidate, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return _scenario_from_doc(doc, candidate.parent.resolve(), str(path))
    name = str(path)
    if name in bundled_scenario_names():
        return _load_bundled(name)
    raise ConfigError(f"no scenario file or bundled scenario named {path!r}")


def bundled_scenario_names() -> list[str]:
    pkg = resources.files("dccsim") / "scenarios"
    return sorted(
        p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json")
    )


def _load_bundled(name: str) -> Scenario:
    pkg = resources.files("dccsim") / "scenarios"
    with resources.as_file(pkg / f"{name}.json") as path:
        return load_scenario(path)
