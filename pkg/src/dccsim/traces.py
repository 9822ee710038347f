"""Exogenous time series: grid carbon intensity, ambient temperature, workload arrivals.

Traces are uniformly sampled, immutable after construction, and always validated
against the value range of their kind. All downstream modules read them through
``value_at`` / ``forecast_window`` and never mutate them, so a single trace can
be shared across concurrent simulation instances.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

import numpy as np

from .errors import (
    DomainError,
    EmptyTrace,
    InvalidParams,
    InvalidStep,
    NonUniformInterval,
    ParseError,
    RangeViolation,
)

DEFAULT_STEP_SECONDS = 900
DEFAULT_START = datetime(2025, 1, 6, 0, 0, 0, tzinfo=timezone.utc)  # a Monday


class TraceKind(str, Enum):
    CARBON_INTENSITY = "carbon_intensity"  # gCO2/kWh
    AMBIENT_TEMP = "ambient_temp"          # degrees C
    WORKLOAD = "workload"                  # fraction of capacity


# Valid value range per kind (inclusive).
VALUE_RANGES: dict[TraceKind, tuple[float, float]] = {
    TraceKind.CARBON_INTENSITY: (0.0, math.inf),
    TraceKind.AMBIENT_TEMP: (-50.0, 60.0),
    TraceKind.WORKLOAD: (0.0, 1.0),
}


@dataclass(frozen=True)
class TimeTrace:
    """A uniformly sampled time series of one exogenous signal.

    Attributes:
        kind: what the values mean (and therefore their valid range).
        start: UTC timestamp of the first sample.
        step_seconds: sampling interval; must divide 3600.
        values: finite samples, read-only.
    """

    kind: TraceKind
    start: datetime
    step_seconds: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if values.size == 0:
            raise EmptyTrace(f"{self.kind.value} trace has no samples")
        if not np.all(np.isfinite(values)):
            raise RangeViolation(f"{self.kind.value} trace contains non-finite values")
        if self.step_seconds <= 0 or 3600 % self.step_seconds != 0:
            raise InvalidStep(
                f"step_seconds must be a positive divisor of 3600, got {self.step_seconds}"
            )
        lo, hi = VALUE_RANGES[self.kind]
        if float(values.min()) < lo or float(values.max()) > hi:
            raise RangeViolation(
                f"{self.kind.value} values must lie in [{lo}, {hi}]; "
                f"got range [{values.min()}, {values.max()}]"
            )

    def __len__(self) -> int:
        return int(self.values.size)

    def value_at(self, t: int) -> float:
        return float(self.values[t])

    def span_seconds(self) -> int:
        return (len(self) - 1) * self.step_seconds


def _parse_timestamp(text: str, row_num: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ParseError(f"row {row_num}: bad timestamp {text!r}") from exc
    if ts.tzinfo is None:
        raise ParseError(f"row {row_num}: timestamp {text!r} has no timezone")
    return ts.astimezone(timezone.utc)


def load_trace(path, kind: TraceKind) -> TimeTrace:
    """Load a trace from a ``timestamp,value`` CSV file.

    Timestamps must be ISO-8601 UTC, strictly increasing at a uniform interval
    inferred from the first two rows. A single-row file falls back to the
    default 900 s interval.
    """
    timestamps: list[datetime] = []
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTrace(f"{path}: file is empty") from None
        if [c.strip().lower() for c in header] != ["timestamp", "value"]:
            raise ParseError(f"{path}: expected header 'timestamp,value', got {header!r}")
        for row_num, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ParseError(f"{path}: row {row_num} has {len(row)} fields, expected 2")
            ts = _parse_timestamp(row[0].strip(), row_num)
            try:
                value = float(row[1])
            except ValueError as exc:
                raise ParseError(f"{path}: row {row_num}: bad value {row[1]!r}") from exc
            timestamps.append(ts)
            values.append(value)

    if not values:
        raise EmptyTrace(f"{path}: no data rows")

    if len(timestamps) >= 2:
        step = (timestamps[1] - timestamps[0]).total_seconds()
        if step <= 0 or step != int(step):
            raise NonUniformInterval(f"{path}: non-positive or fractional interval {step}s")
        step_seconds = int(step)
        for i in range(1, len(timestamps)):
            got = (timestamps[i] - timestamps[i - 1]).total_seconds()
            if got != step:
                raise NonUniformInterval(
                    f"{path}: interval {got}s at row {i + 2} differs from inferred {step}s"
                )
    else:
        step_seconds = DEFAULT_STEP_SECONDS

    return TimeTrace(kind=kind, start=timestamps[0], step_seconds=step_seconds,
                     values=np.array(values, dtype=np.float64))


def write_trace(trace: TimeTrace, path) -> None:
    """Write a trace as ``timestamp,value`` CSV (UTF-8, LF, ISO-8601 Z).

    Values are written with shortest round-trip formatting so that
    ``load_trace(write_trace(x))`` reproduces the value column bit-exactly.
    """
    from datetime import timedelta

    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("timestamp,value\n")
        for i, v in enumerate(trace.values):
            ts = trace.start + timedelta(seconds=i * trace.step_seconds)
            stamp = ts.strftime("%Y-%m-%dT%H:%M:%SZ")
            fh.write(f"{stamp},{float(v)!r}\n")


def resample(trace: TimeTrace, new_step_seconds: int) -> TimeTrace:
    """Linearly interpolate a trace onto a new uniform grid over the same span.

    Endpoints are preserved; when the span is not an exact multiple of the new
    step the grid stops at the last point inside the span (no extrapolation).
    """
    if new_step_seconds <= 0 or 3600 % new_step_seconds != 0:
        raise InvalidStep(f"new step must be a positive divisor of 3600, got {new_step_seconds}")
    if new_step_seconds == trace.step_seconds:
        return trace
    span = trace.span_seconds()
    n_new = span // new_step_seconds + 1
    old_t = np.arange(len(trace), dtype=np.float64) * trace.step_seconds
    new_t = np.arange(n_new, dtype=np.float64) * new_step_seconds
    new_values = np.interp(new_t, old_t, trace.values)
    return TimeTrace(kind=trace.kind, start=trace.start,
                     step_seconds=new_step_seconds, values=new_values)


def forecast_window(trace: TimeTrace, t: int, k: int) -> np.ndarray:
    """Return trace values at steps t+1 .. t+k, clamping past the end.

    This is a perfect-foresight read; a noise-injection hook may replace it
    later, but the default contract is exact lookahead.
    """
    if t < 0:
        raise DomainError(f"step index must be >= 0, got {t}")
    if k < 1:
        raise InvalidParams(f"horizon k must be >= 1, got {k}")
    idx = np.minimum(np.arange(t + 1, t + k + 1), len(trace) - 1)
    return trace.values[idx]


@dataclass(frozen=True)
class SynthParams:
    """Parameters of the sinusoid-plus-noise generator."""

    mean: float
    amplitude: float
    period_steps: float
    noise_std: float
    length: int
    step_seconds: int = DEFAULT_STEP_SECONDS
    start: datetime = DEFAULT_START


def synth_trace(kind: TraceKind, seed: int, params: SynthParams) -> TimeTrace:
    """Generate a deterministic sinusoidal trace with Gaussian noise.

    value(t) = mean + amplitude * sin(2*pi*t/period_steps + phase(seed)) + noise,
    clipped to the valid range of ``kind``. The phase and the noise stream are
    both drawn from a generator seeded with ``seed``, so the result is a pure
    function of (kind, seed, params).
    """
    if params.length < 1:
        raise InvalidParams(f"length must be >= 1, got {params.length}")
    if params.amplitude < 0 or params.noise_std < 0:
        raise InvalidParams("amplitude and noise_std must be >= 0")
    if params.period_steps <= 0:
        raise InvalidParams(f"period_steps must be > 0, got {params.period_steps}")

    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    t = np.arange(params.length, dtype=np.float64)
    values = params.mean + params.amplitude * np.sin(
        2.0 * math.pi * t / params.period_steps + phase
    )
    if params.noise_std > 0:
        values = values + rng.normal(0.0, params.noise_std, size=params.length)
    lo, hi = VALUE_RANGES[kind]
    values = np.clip(values, lo, hi)
    return TimeTrace(kind=kind, start=params.start,
                     step_seconds=params.step_seconds, values=values)
