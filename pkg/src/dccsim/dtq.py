"""Deferred task queue: temporal shifting of flexible work inside one DC.

Tasks are atomic (never split); the queue is kept in earliest-deadline-first
order with the task id as tie-break, which makes every operation deterministic.
Operations return new queue instances; a queue is owned by exactly one
simulation instance.
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass

from .errors import DomainError


@dataclass(frozen=True, order=True)
class Task:
    """One unit of schedulable work.

    ``load`` is in server-step units: 1.0 means one server fully busy for one
    step. Field order matters: sorting a task tuple orders by (deadline, id),
    the queue's canonical order.
    """

    deadline_step: int
    id: int
    arrival_step: int
    load: float
    flexible: bool = True

    def __post_init__(self):
        if self.load <= 0:
            raise DomainError(f"task load must be positive, got {self.load}")
        if self.deadline_step < self.arrival_step:
            raise DomainError("deadline_step must be >= arrival_step")


class DeferredQueue:
    """Deadline-ordered queue of deferred tasks with a hard occupancy cap."""

    __slots__ = ("capacity_units", "pending", "occupancy")

    def __init__(self, capacity_units: float, pending: list[Task] | None = None,
                 occupancy: float | None = None):
        self.capacity_units = float(capacity_units)
        self.pending: list[Task] = pending if pending is not None else []
        if occupancy is None:
            occupancy = sum(t.load for t in self.pending)
        self.occupancy = occupancy

    def copy(self) -> "DeferredQueue":
        return DeferredQueue(self.capacity_units, list(self.pending), self.occupancy)

    def __len__(self) -> int:
        return len(self.pending)


def split_arrivals(arrivals, defer_fraction: float):
    """Split newly arrived tasks into (to_defer, to_run_now).

    Inflexible tasks always run now. Flexible tasks, in id order, are deferred
    as a prefix whose total load is the largest achievable that stays at or
    below defer_fraction * (total flexible load); the first task that would
    overshoot stops the scan (tasks are never split).
    """
    if not 0.0 <= defer_fraction <= 1.0:
        raise DomainError(f"defer_fraction must lie in [0, 1], got {defer_fraction}")
    run_now = [t for t in arrivals if not t.flexible]
    flexible = sorted((t for t in arrivals if t.flexible), key=lambda t: t.id)
    budget = defer_fraction * sum(t.load for t in flexible)
    to_defer = []
    acc = 0.0
    for i, task in enumerate(flexible):
        if acc + task.load <= budget + 1e-12:
            to_defer.append(task)
            acc += task.load
        else:
            run_now.extend(flexible[i:])
            break
    return to_defer, run_now


def enqueue(queue: DeferredQueue, tasks):
    """Admit tasks in (deadline, id) order until capacity; return (queue', rejected).

    Rejected tasks are handed back to run immediately; nothing is ever dropped.
    """
    new_queue = queue.copy()
    rejected = []
    for task in sorted(tasks):
        if new_queue.occupancy + task.load <= new_queue.capacity_units + 1e-12:
            insort(new_queue.pending, task)
            new_queue.occupancy += task.load
        else:
            rejected.append(task)
    return new_queue, rejected


def release(queue: DeferredQueue, t: int, headroom: float, release_fraction: float):
    """Release tasks at step ``t``; return (queue', released).

    Every task whose deadline is ``t`` leaves unconditionally, even past the
    headroom (the caller accounts the excess as SLA pressure). Further tasks
    are then released in (deadline, id) order while the cumulative released
    load, deadline-forced included, stays within release_fraction * headroom.
    """
    if not 0.0 <= release_fraction <= 1.0:
        raise DomainError(f"release_fraction must lie in [0, 1], got {release_fraction}")
    if headroom < 0:
        raise DomainError(f"headroom must be >= 0, got {headroom}")

    pending = queue.pending
    released: list[Task] = []
    idx = 0
    # Deadline forcing: EDF order puts all deadline == t tasks at the front.
    while idx < len(pending) and pending[idx].deadline_step <= t:
        released.append(pending[idx])
        idx += 1
    cum = sum(task.load for task in released)
    budget = release_fraction * headroom
    while idx < len(pending) and cum + pending[idx].load <= budget + 1e-12:
        released.append(pending[idx])
        cum += pending[idx].load
        idx += 1

    remaining = pending[idx:]
    new_queue = DeferredQueue(queue.capacity_units, remaining)
    return new_queue, released
