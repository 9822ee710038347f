"""Cluster composition and the top-level step loop.

One tick runs: read traces -> geographic dispatch of arrivals -> per-DC
temporal split/enqueue/release -> per-DC physics step -> transfer + DC
energies into the ledger -> CO2 from per-DC carbon intensity.

Dispatch uses a flexible-pool model: a fraction of every DC's arrivals is
movable, the top-level weights say where the pool should run, and pairwise
moves are derived deterministically from the surplus/deficit pattern, then
clipped by per-pair transfer caps. Transfers deliver within the same step and
their energy overhead is charged to the origin DC.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import dtq as dtq_mod
from .dcmodel import CoolingAction, DcConfig, DcState, dc_step, initial_state
from .dtq import DeferredQueue, Task
from .errors import ConfigError, DomainError, TraceExhausted
from .traces import TimeTrace


@dataclass(frozen=True)
class DcTraces:
    """The three exogenous signals driving one DC."""

    carbon_intensity: TimeTrace
    ambient_temp: TimeTrace
    workload: TimeTrace

    def min_length(self) -> int:
        return min(len(self.carbon_intensity), len(self.ambient_temp), len(self.workload))


@dataclass(frozen=True)
class ClusterConfig:
    """Static description of the cluster: DCs, geography, transfer model, DTQ."""

    dc_names: tuple[str, ...]
    dc_configs: tuple[DcConfig, ...]
    traces: tuple[DcTraces, ...]
    distance_km: tuple[tuple[float, ...], ...]
    transfer_cap_units: float
    kappa_kwh_per_unit_km: float
    flexible_fraction: float
    task_granularity_units: float
    episode_steps: int
    step_seconds: int = 900
    max_defer_steps: int = 96
    dtq_capacity_units: tuple[float, ...] = ()

    def __post_init__(self):
        n = len(self.dc_configs)
        if n < 1:
            raise ConfigError("a cluster needs at least one DC")
        if len(self.dc_names) != n or len(self.traces) != n:
            raise ConfigError("dc_names, dc_configs and traces must align")
        if len(self.distance_km) != n or any(len(row) != n for row in self.distance_km):
            raise ConfigError("distance_km must be an NxN matrix")
        for i in range(n):
            if self.distance_km[i][i] != 0.0:
                raise ConfigError("distance_km diagonal must be zero")
            for j in range(n):
                if self.distance_km[i][j] < 0:
                    raise ConfigError("distances must be >= 0")
                if self.distance_km[i][j] != self.distance_km[j][i]:
                    raise ConfigError("distance_km must be symmetric")
        if self.transfer_cap_units < 0 or self.kappa_kwh_per_unit_km < 0:
            raise ConfigError("transfer cap and kappa must be >= 0")
        if not 0.0 <= self.flexible_fraction <= 1.0:
            raise ConfigError("flexible_fraction must lie in [0, 1]")
        if self.task_granularity_units <= 0:
            raise ConfigError("task_granularity_units must be positive")
        if self.episode_steps < 1:
            raise ConfigError("episode_steps must be >= 1")
        if self.max_defer_steps < 0:
            raise ConfigError("max_defer_steps must be >= 0")
        if not self.dtq_capacity_units:
            # Default cap: a quarter of one step's full-DC load, held for 96 steps.
            object.__setattr__(
                self,
                "dtq_capacity_units",
                tuple(0.25 * c.capacity_units * 96 for c in self.dc_configs),
            )
        elif len(self.dtq_capacity_units) != n:
            raise ConfigError("dtq_capacity_units must have one entry per DC")
        for tr in self.traces:
            if tr.min_length() < self.episode_steps:
                raise ConfigError(
                    f"traces must cover episode_steps={self.episode_steps}, "
                    f"shortest has {tr.min_length()}"
                )

    @property
    def n_dcs(self) -> int:
        return len(self.dc_configs)

    def capacity_units(self, i: int) -> float:
        return self.dc_configs[i].capacity_units


def normalize_weights(w) -> list[float]:
    """Project raw nonnegative weights onto the simplex; reject bad input."""
    w = [float(x) for x in w]
    if any(x < -1e-9 for x in w):
        raise DomainError("dispatch weights must be >= 0")
    total = sum(w)
    if total <= 0:
        raise DomainError("dispatch weights must not all be zero")
    return [max(0.0, x) / total for x in w]


@dataclass(frozen=True)
class HierAction:
    """Joint action of all three control levels for one step.

    ``top_weights`` of None means origin dispatch: every DC keeps its own
    arrivals (the no-geographic-shifting baseline, exact regardless of the
    current arrival pattern).
    """

    top_weights: tuple[float, ...] | None
    defer_fraction: tuple[float, ...]
    release_fraction: tuple[float, ...]
    cooling: tuple[CoolingAction, ...]


@dataclass
class ClusterState:
    """Dynamic state owned by one simulation instance."""

    dc_states: list[DcState]
    queues: list[DeferredQueue]
    next_task_id: int = 0
    last_assigned: list[float] = field(default_factory=list)

    def copy(self) -> "ClusterState":
        return ClusterState(
            dc_states=list(self.dc_states),
            queues=[q.copy() for q in self.queues],
            next_task_id=self.next_task_id,
            last_assigned=list(self.last_assigned),
        )


def initial_cluster_state(cfg: ClusterConfig) -> ClusterState:
    states = [
        initial_state(cfg.dc_configs[i], cfg.traces[i].ambient_temp.value_at(0))
        for i in range(cfg.n_dcs)
    ]
    queues = [DeferredQueue(cfg.dtq_capacity_units[i]) for i in range(cfg.n_dcs)]
    return ClusterState(dc_states=states, queues=queues,
                        last_assigned=[0.0] * cfg.n_dcs)


def transfer_cost(moved_units, cfg: ClusterConfig):
    """Clip pairwise moves to the per-pair cap and price the energy overhead.

    Returns (energy_kwh per origin DC, clipped move matrix). Excess above the
    cap stays at the origin; energy is kappa * distance * units, charged to
    the origin DC.
    """
    n = cfg.n_dcs
    cap = cfg.transfer_cap_units
    kappa = cfg.kappa_kwh_per_unit_km
    energy = [0.0] * n
    clipped = [[0.0] * n for _ in range(n)]
    for i in range(n):
        row = moved_units[i]
        for j in range(n):
            m = row[j]
            if i == j:
                if m != 0.0:
                    raise DomainError("move matrix must have a zero diagonal")
                continue
            if m < 0:
                raise DomainError("moves must be >= 0")
            if m > cap:
                m = cap
            if m > 0.0:
                clipped[i][j] = m
                energy[i] += kappa * cfg.distance_km[i][j] * m
    return energy, clipped


def dispatch(arrivals, weights, headroom, cfg: ClusterConfig):
    """Convert top-level weights into feasible per-DC assignments and moves.

    Returns (assigned per DC, clipped move matrix, stayed_at_origin per DC).
    ``weights`` of None performs origin dispatch (no movement). Conservation
    holds exactly: sum(assigned) == sum(arrivals) up to float rounding.
    """
    n = cfg.n_dcs
    arrivals = [float(a) for a in arrivals]
    if any(a < 0 for a in arrivals):
        raise DomainError("arrivals must be >= 0")
    zero_moves = [[0.0] * n for _ in range(n)]
    if weights is None or n == 1:
        return list(arrivals), zero_moves, [0.0] * n

    w = normalize_weights(weights)
    ff = cfg.flexible_fraction
    flex = [ff * a for a in arrivals]
    inflex = [a - f for a, f in zip(arrivals, flex)]
    pool = sum(flex)
    if pool <= 0.0:
        return list(arrivals), zero_moves, [0.0] * n

    headroom = [max(0.0, float(h)) for h in headroom]
    target = [wi * pool for wi in w]
    alloc = [min(t, h) for t, h in zip(target, headroom)]
    excess = pool - sum(alloc)
    if excess > 1e-12:
        remaining = [h - a for h, a in zip(headroom, alloc)]
        room = sum(remaining)
        if room > 0.0:
            fill = min(excess, room)
            alloc = [a + fill * r / room for a, r in zip(alloc, remaining)]
            excess -= fill
    stayed = [0.0] * n
    if excess > 1e-12:
        # No headroom anywhere for this remainder: it stays at its origin.
        for i in range(n):
            stayed[i] = excess * flex[i] / pool
    desired = [alloc[i] + stayed[i] for i in range(n)]

    # Origin-proportional flows from surplus DCs to deficit DCs.
    exports = [max(0.0, flex[i] - desired[i]) for i in range(n)]
    imports = [max(0.0, desired[i] - flex[i]) for i in range(n)]
    total_import = sum(imports)
    moves = zero_moves
    if total_import > 1e-12:
        moves = [
            [
                (exports[i] * imports[j] / total_import) if i != j else 0.0
                for j in range(n)
            ]
            for i in range(n)
        ]
    _, clipped = transfer_cost(moves, cfg)

    assigned = []
    returned = [0.0] * n
    for i in range(n):
        out_i = sum(clipped[i])
        in_i = sum(clipped[j][i] for j in range(n))
        returned[i] = sum(moves[i]) - out_i
        assigned.append(inflex[i] + flex[i] - out_i + in_i)
    stayed_total = [stayed[i] + returned[i] for i in range(n)]
    return assigned, clipped, stayed_total


def co2(energy_kwh, ci) -> tuple[list[float], float]:
    """CO2 mass from energy and carbon intensity: kg_i = kWh_i * ci_i / 1000."""
    per_dc = []
    for e, c in zip(energy_kwh, ci):
        if e < 0 or c < 0:
            raise DomainError("energy and carbon intensity must be >= 0")
        per_dc.append(e * c / 1000.0)
    return per_dc, sum(per_dc)


@dataclass(frozen=True)
class StepReport:
    """Everything the ledger, metrics log and observations need from one tick."""

    step: int
    ci: tuple[float, ...]
    ambient_c: tuple[float, ...]
    arrivals: tuple[float, ...]
    assigned: tuple[float, ...]
    executed: tuple[float, ...]
    utilization: tuple[float, ...]
    energy_it_kwh: tuple[float, ...]
    energy_pump_kwh: tuple[float, ...]
    energy_chiller_kwh: tuple[float, ...]
    energy_transfer_kwh: tuple[float, ...]
    co2_kg: tuple[float, ...]
    sla_units: tuple[float, ...]
    overtemp_groups: tuple[int, ...]
    dtq_occupancy: tuple[float, ...]
    window_violations: int
    total_co2_kg: float

    def dc_energy_kwh(self, i: int) -> float:
        return (self.energy_it_kwh[i] + self.energy_pump_kwh[i]
                + self.energy_chiller_kwh[i] + self.energy_transfer_kwh[i])


def cluster_step(state: ClusterState, action: HierAction, t: int,
                 cfg: ClusterConfig) -> tuple[ClusterState, StepReport]:
    """Advance the whole cluster by one step. Pure: returns a new state."""
    n = cfg.n_dcs
    for tr in cfg.traces:
        if t >= tr.min_length():
            raise TraceExhausted(f"step {t} is beyond the driving traces")
    ci = [cfg.traces[i].carbon_intensity.value_at(t) for i in range(n)]
    ambient = [cfg.traces[i].ambient_temp.value_at(t) for i in range(n)]
    arrivals = [
        cfg.traces[i].workload.value_at(t) * cfg.capacity_units(i) for i in range(n)
    ]

    ff = cfg.flexible_fraction
    headroom = [
        max(0.0, cfg.capacity_units(i) - (1.0 - ff) * arrivals[i]) for i in range(n)
    ]
    assigned, moves, _stayed = dispatch(arrivals, action.top_weights, headroom, cfg)
    transfer_energy, _ = transfer_cost(moves, cfg)

    new_state = state.copy()
    last_step = cfg.episode_steps - 1
    granularity = cfg.task_granularity_units

    executed = [0.0] * n
    utilization = [0.0] * n
    sla = [0.0] * n
    occupancy = [0.0] * n
    e_it = [0.0] * n
    e_pump = [0.0] * n
    e_chiller = [0.0] * n
    overtemp_counts = [0] * n
    window_violations = 0

    for i in range(n):
        capacity = cfg.capacity_units(i)
        # Inflexible load never moves, so the flexible share of the assignment
        # is whatever dispatch added on top of the origin's inflexible part.
        inflex_load = (1.0 - ff) * arrivals[i]
        flex_load = max(0.0, assigned[i] - inflex_load)

        # Materialize the flexible load as atomic tasks of bounded size.
        tasks = []
        next_id = new_state.next_task_id
        deadline = min(t + cfg.max_defer_steps, last_step)
        remaining = flex_load
        while remaining > 1e-9:
            load = granularity if remaining >= granularity else remaining
            tasks.append(Task(deadline_step=deadline, id=next_id,
                              arrival_step=t, load=load, flexible=True))
            next_id += 1
            remaining -= load
        new_state.next_task_id = next_id

        to_defer, run_now_tasks = dtq_mod.split_arrivals(tasks, action.defer_fraction[i])
        queue, rejected = dtq_mod.enqueue(new_state.queues[i], to_defer)
        run_now_load = inflex_load + sum(task.load for task in run_now_tasks)
        run_now_load += sum(task.load for task in rejected)
        release_headroom = max(0.0, capacity - run_now_load)
        queue, released = dtq_mod.release(
            queue, t, release_headroom, action.release_fraction[i]
        )
        for task in released:
            if not task.arrival_step <= t <= task.deadline_step:
                window_violations += 1
        new_state.queues[i] = queue
        occupancy[i] = queue.occupancy

        total_load = run_now_load + sum(task.load for task in released)
        executed[i] = total_load
        utilization[i] = min(1.0, total_load / capacity)
        sla[i] = max(0.0, total_load - capacity)

        dc_state, energy, flags = dc_step(
            new_state.dc_states[i], utilization[i], action.cooling[i],
            ambient[i], cfg.step_seconds, cfg.dc_configs[i],
        )
        new_state.dc_states[i] = dc_state
        e_it[i] = energy["it"]
        e_pump[i] = energy["pump"]
        e_chiller[i] = energy["chiller"]
        overtemp_counts[i] = sum(flags)

    new_state.last_assigned = list(assigned)
    total_energy = [
        e_it[i] + e_pump[i] + e_chiller[i] + transfer_energy[i] for i in range(n)
    ]
    co2_per_dc, co2_total = co2(total_energy, ci)

    report = StepReport(
        step=t,
        ci=tuple(ci),
        ambient_c=tuple(ambient),
        arrivals=tuple(arrivals),
        assigned=tuple(assigned),
        executed=tuple(executed),
        utilization=tuple(utilization),
        energy_it_kwh=tuple(e_it),
        energy_pump_kwh=tuple(e_pump),
        energy_chiller_kwh=tuple(e_chiller),
        energy_transfer_kwh=tuple(transfer_energy),
        co2_kg=tuple(co2_per_dc),
        sla_units=tuple(sla),
        overtemp_groups=tuple(overtemp_counts),
        dtq_occupancy=tuple(occupancy),
        window_violations=window_violations,
        total_co2_kg=co2_total,
    )
    return new_state, report


class EmissionsLedger:
    """Cumulative energy/CO2/violation accounting, per DC and cluster-wide.

    Totals are accumulated in step order with per-step DC sums, so recomputing
    them from the step log in the same order reproduces them bit-exactly.
    """

    def __init__(self, n_dcs: int):
        self.n_dcs = n_dcs
        self.steps: list[StepReport] = []
        self.energy_kwh = {k: [0.0] * n_dcs
                           for k in ("it", "pump", "chiller", "transfer")}
        self.co2_kg = [0.0] * n_dcs
        self.sla_units = [0.0] * n_dcs
        self.overtemp_steps = [0] * n_dcs
        self.total_co2_kg = 0.0
        self.total_energy_kwh = 0.0
        self.total_sla_units = 0.0
        self.total_overtemp_steps = 0

    def record(self, report: StepReport) -> None:
        self.steps.append(report)
        for i in range(self.n_dcs):
            self.energy_kwh["it"][i] += report.energy_it_kwh[i]
            self.energy_kwh["pump"][i] += report.energy_pump_kwh[i]
            self.energy_kwh["chiller"][i] += report.energy_chiller_kwh[i]
            self.energy_kwh["transfer"][i] += report.energy_transfer_kwh[i]
            self.co2_kg[i] += report.co2_kg[i]
            self.sla_units[i] += report.sla_units[i]
            self.overtemp_steps[i] += report.overtemp_groups[i]
        self.total_co2_kg += report.total_co2_kg
        self.total_energy_kwh += sum(report.dc_energy_kwh(i) for i in range(self.n_dcs))
        self.total_sla_units += sum(report.sla_units)
        self.total_overtemp_steps += sum(report.overtemp_groups)

    def cooling_energy_kwh(self, i: int | None = None) -> float:
        if i is None:
            return sum(self.energy_kwh["pump"]) + sum(self.energy_kwh["chiller"])
        return self.energy_kwh["pump"][i] + self.energy_kwh["chiller"][i]
