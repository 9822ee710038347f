"""Single data center physics.

IT power is linear in utilization; each blade group is a lumped thermal node
cooled by a liquid loop whose flow is split by per-group valves; cooling
electricity is a cubic-affinity pump plus a chiller with a linear COP model.
All step functions are pure: (state, inputs) -> outputs, no hidden state.

The hot path is deliberately plain-float Python: blade group counts are small
(<= 8 in the bundled configs) and per-substep numpy dispatch would dominate
the cost of a simulation step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError, DomainError

# Convective exponent of the flow/film-coefficient scaling h ~ (m_dot)^0.8.
FLOW_EXPONENT = 0.8


@dataclass(frozen=True)
class DcConfig:
    """Physical parameters of one data center.

    Units are embedded in the field names. ``coolant_setpoint_range_c`` is the
    (low, high) actuator range of the coolant supply temperature.
    """

    n_servers: int
    p_idle_w: float
    p_peak_w: float
    n_blade_groups: int
    heat_capacity_j_per_k: float
    h0_w_per_k: float
    pump_p_max_w: float
    flow_max_kg_s: float
    coolant_setpoint_range_c: tuple[float, float]
    cpu_temp_limit_c: float = 85.0
    cop_base: float = 4.5
    cop_ambient_slope: float = 0.05
    cop_setpoint_slope: float = 0.15
    max_substep_s: float = 60.0

    def __post_init__(self):
        t_lo, t_hi = self.coolant_setpoint_range_c
        checks = [
            (self.n_servers > 0, "n_servers must be positive"),
            (self.p_idle_w > 0, "p_idle_w must be positive"),
            (self.p_peak_w > self.p_idle_w, "p_peak_w must exceed p_idle_w"),
            (self.n_blade_groups > 0, "n_blade_groups must be positive"),
            (self.heat_capacity_j_per_k > 0, "heat_capacity_j_per_k must be positive"),
            (self.h0_w_per_k > 0, "h0_w_per_k must be positive"),
            (self.pump_p_max_w >= 0, "pump_p_max_w must be >= 0"),
            (self.flow_max_kg_s > 0, "flow_max_kg_s must be positive"),
            (t_lo < t_hi, "setpoint range must satisfy low < high"),
            (self.cpu_temp_limit_c > t_hi, "cpu_temp_limit_c must exceed the setpoint range"),
            (self.max_substep_s > 0, "max_substep_s must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def setpoint_lo(self) -> float:
        return self.coolant_setpoint_range_c[0]

    @property
    def setpoint_hi(self) -> float:
        return self.coolant_setpoint_range_c[1]

    @property
    def capacity_units(self) -> float:
        # 1 load unit == one server at full utilization for one step.
        return float(self.n_servers)


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


@dataclass(frozen=True)
class CoolingAction:
    """Liquid-loop actuator setting: pump speed, supply setpoint, group valves.

    Components are clamped into their actuator ranges at construction, so any
    finite input produces a valid action.
    """

    pump_speed: float
    coolant_setpoint_c: float
    valve_open: tuple[float, ...]

    @classmethod
    def clamped(cls, pump_speed: float, coolant_setpoint_c: float,
                valve_open, cfg: DcConfig) -> "CoolingAction":
        valves = tuple(_clamp(float(v), 0.0, 1.0) for v in valve_open)
        if len(valves) != cfg.n_blade_groups:
            raise DomainError(
                f"expected {cfg.n_blade_groups} valve settings, got {len(valves)}"
            )
        return cls(
            pump_speed=_clamp(float(pump_speed), 0.0, 1.0),
            coolant_setpoint_c=_clamp(
                float(coolant_setpoint_c), cfg.setpoint_lo, cfg.setpoint_hi
            ),
            valve_open=valves,
        )


def open_loop_action(cfg: DcConfig) -> CoolingAction:
    """The fixed industry default: full pump, coldest setpoint, all valves open."""
    return CoolingAction(1.0, cfg.setpoint_lo, (1.0,) * cfg.n_blade_groups)


@dataclass(frozen=True)
class DcState:
    """One DC's dynamic state after a step."""

    utilization: float
    group_temps_c: tuple[float, ...]
    power_w: dict = field(default_factory=dict)
    last_energy_kwh: dict = field(default_factory=dict)


def initial_state(cfg: DcConfig, ambient_c: float) -> DcState:
    """State at episode start: idle, blade groups in equilibrium with ambient."""
    return DcState(
        utilization=0.0,
        group_temps_c=(float(ambient_c),) * cfg.n_blade_groups,
        power_w={"it": 0.0, "pump": 0.0, "chiller": 0.0},
        last_energy_kwh={"it": 0.0, "pump": 0.0, "chiller": 0.0},
    )


def it_power(u: float, cfg: DcConfig) -> float:
    """Total IT power in watts for utilization ``u`` (linear server model)."""
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"utilization must lie in [0, 1], got {u}")
    return cfg.n_servers * (cfg.p_idle_w + (cfg.p_peak_w - cfg.p_idle_w) * u)


def group_flow(action: CoolingAction, cfg: DcConfig) -> list[float]:
    """Coolant mass flow per blade group (kg/s).

    Total flow is pump_speed * flow_max; valves split it proportionally.
    All-closed valves degrade to a uniform split (of whatever total flow the
    pump provides) so there is never a division by zero.
    """
    total = action.pump_speed * cfg.flow_max_kg_s
    vsum = sum(action.valve_open)
    g = cfg.n_blade_groups
    if vsum < 1e-9:
        return [total / g] * g
    return [total * v / vsum for v in action.valve_open]


def film_coefficient(m_dot: float, cfg: DcConfig) -> float:
    """Convective coefficient h(m_dot) = h0 * (m_dot/m_ref)^0.8, zero at no flow."""
    if m_dot <= 0.0:
        return 0.0
    m_ref = cfg.flow_max_kg_s / cfg.n_blade_groups
    return cfg.h0_w_per_k * (m_dot / m_ref) ** FLOW_EXPONENT


def thermal_step(state: DcState, action: CoolingAction, heat_w,
                 dt_s: float, cfg: DcConfig) -> tuple[float, ...]:
    """Advance blade-group temperatures by ``dt_s`` seconds.

    Explicit Euler on C*dT/dt = q - h(m_dot)*(T - T_cool) per group, substepped
    so each Euler step is at most ``cfg.max_substep_s`` for stability.
    """
    if dt_s <= 0:
        raise DomainError(f"dt_s must be positive, got {dt_s}")
    flows = group_flow(action, cfg)
    h = [film_coefficient(m, cfg) for m in flows]
    t_cool = action.coolant_setpoint_c
    n_sub = max(1, math.ceil(dt_s / cfg.max_substep_s))
    dt_sub = dt_s / n_sub
    c = cfg.heat_capacity_j_per_k
    temps = list(state.group_temps_c)
    for _ in range(n_sub):
        for i in range(cfg.n_blade_groups):
            q_net = heat_w[i] - h[i] * (temps[i] - t_cool)
            temps[i] += dt_sub * q_net / c
    return tuple(temps)


def cooling_power(action: CoolingAction, heat_removed_w: float,
                  ambient_c: float, cfg: DcConfig) -> dict:
    """Electrical power of the cooling plant, split into pump and chiller.

    Pump follows the cubic affinity law; the chiller moves ``heat_removed_w``
    at a COP that improves with a warmer setpoint and degrades with a warmer
    ambient, floored at 1.
    """
    if heat_removed_w < 0:
        raise DomainError(f"heat_removed_w must be >= 0, got {heat_removed_w}")
    pump = cfg.pump_p_max_w * action.pump_speed ** 3
    cop = max(
        1.0,
        cfg.cop_base
        - cfg.cop_ambient_slope * (ambient_c - 20.0)
        + cfg.cop_setpoint_slope * (action.coolant_setpoint_c - cfg.setpoint_lo),
    )
    chiller = heat_removed_w / cop
    return {"pump": pump, "chiller": chiller}


def dc_step(state: DcState, u: float, action: CoolingAction, ambient_c: float,
            dt_s: float, cfg: DcConfig):
    """Run one simulation step of a single DC.

    Returns (new_state, energy_kwh breakdown, overtemp flags per group).
    IT heat is spread uniformly over blade groups; heat removed is evaluated
    at end-of-step temperatures; energies are power * dt.
    """
    p_it = it_power(u, cfg)
    g = cfg.n_blade_groups
    heat_per_group = [p_it / g] * g

    temps = thermal_step(state, action, heat_per_group, dt_s, cfg)

    flows = group_flow(action, cfg)
    t_cool = action.coolant_setpoint_c
    heat_removed = 0.0
    for i in range(g):
        h = film_coefficient(flows[i], cfg)
        dt_hot = temps[i] - t_cool
        if dt_hot > 0.0:
            heat_removed += h * dt_hot

    cool = cooling_power(action, heat_removed, ambient_c, cfg)
    power = {"it": p_it, "pump": cool["pump"], "chiller": cool["chiller"]}
    to_kwh = dt_s / 3.6e6
    energy = {k: v * to_kwh for k, v in power.items()}
    overtemp = tuple(t > cfg.cpu_temp_limit_c for t in temps)

    new_state = DcState(
        utilization=u,
        group_temps_c=temps,
        power_w=power,
        last_energy_kwh=energy,
    )
    return new_state, energy, overtemp


def pue(energy_kwh: dict) -> float:
    """Power usage effectiveness of one energy breakdown: (it+pump+chiller)/it."""
    it = energy_kwh["it"]
    if it <= 0:
        raise ZeroDivisionError("PUE is undefined when IT energy is zero")
    return (it + energy_kwh["pump"] + energy_kwh["chiller"]) / it
