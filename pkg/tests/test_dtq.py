"""Tests for the deferred task queue: split, admit, release."""

import pytest

from dccsim.dtq import DeferredQueue, Task, enqueue, release, split_arrivals
from dccsim.errors import DomainError


def task(tid, load=1.0, arrival=0, deadline=10, flexible=True):
    return Task(deadline_step=deadline, id=tid, arrival_step=arrival,
                load=load, flexible=flexible)


class TestSplitArrivals:
    def test_zero_fraction_runs_everything(self):
        tasks = [task(1), task(2), task(3)]
        to_defer, run_now = split_arrivals(tasks, 0.0)
        assert to_defer == []
        assert sorted(t.id for t in run_now) == [1, 2, 3]

    def test_full_fraction_defers_all_flexible(self):
        tasks = [task(1), task(2)]
        to_defer, run_now = split_arrivals(tasks, 1.0)
        assert sorted(t.id for t in to_defer) == [1, 2]
        assert run_now == []

    def test_prefix_rule(self):
        # Loads [2, 2, 2], fraction 0.5 -> budget 3: id 1 fits (2 <= 3),
        # adding id 2 would reach 4 > 3, so only id 1 is deferred.
        tasks = [task(1, 2.0), task(2, 2.0), task(3, 2.0)]
        to_defer, run_now = split_arrivals(tasks, 0.5)
        assert [t.id for t in to_defer] == [1]
        assert sorted(t.id for t in run_now) == [2, 3]

    def test_inflexible_always_runs(self):
        tasks = [task(1, flexible=False), task(2)]
        to_defer, run_now = split_arrivals(tasks, 1.0)
        assert [t.id for t in to_defer] == [2]
        assert [t.id for t in run_now] == [1]

    def test_invalid_fraction(self):
        with pytest.raises(DomainError):
            split_arrivals([], 1.5)


class TestEnqueue:
    def test_admit_within_capacity(self):
        queue = DeferredQueue(10.0)
        queue, rejected = enqueue(queue, [task(1, 4.0)])
        assert rejected == []
        assert queue.occupancy == 4.0

    def test_overflow_rejected_not_dropped(self):
        queue = DeferredQueue(10.0)
        queue, _ = enqueue(queue, [task(1, 9.0)])
        queue, rejected = enqueue(queue, [task(2, 4.0)])
        assert [t.id for t in rejected] == [2]
        assert queue.occupancy == 9.0

    def test_deadline_then_id_ordering(self):
        queue = DeferredQueue(100.0)
        queue, _ = enqueue(queue, [task(7, deadline=5), task(3, deadline=5)])
        assert [t.id for t in queue.pending] == [3, 7]

    def test_admission_order_is_edf(self):
        # Near capacity, the earliest-deadline task wins admission.
        queue = DeferredQueue(1.0)
        queue, rejected = enqueue(
            queue, [task(1, 1.0, deadline=9), task(2, 1.0, deadline=3)]
        )
        assert [t.id for t in queue.pending] == [2]
        assert [t.id for t in rejected] == [1]


class TestRelease:
    def test_nothing_without_budget_or_deadline(self):
        queue, _ = enqueue(DeferredQueue(10.0), [task(1, deadline=9)])
        queue, released = release(queue, 5, headroom=10.0, release_fraction=0.0)
        assert released == []
        assert len(queue) == 1

    def test_deadline_forcing_ignores_headroom(self):
        queue, _ = enqueue(DeferredQueue(10.0), [task(1, 3.0, deadline=5)])
        queue, released = release(queue, 5, headroom=0.0, release_fraction=0.0)
        assert [t.id for t in released] == [1]
        assert len(queue) == 0

    def test_edf_budget_rule(self):
        # Queue: id1 load 3 deadline t+2, id2 load 2 deadline t+1.
        # Budget 4 releases id2 first (2 <= 4); id1 would reach 5 > 4.
        t = 10
        queue, _ = enqueue(
            DeferredQueue(10.0),
            [task(1, 3.0, deadline=t + 2), task(2, 2.0, deadline=t + 1)],
        )
        queue, released = release(queue, t, headroom=4.0, release_fraction=1.0)
        assert [t_.id for t_ in released] == [2]
        assert [t_.id for t_ in queue.pending] == [1]

    def test_forced_load_counts_against_budget(self):
        # A forced release consumes the voluntary budget too.
        t = 4
        queue, _ = enqueue(
            DeferredQueue(10.0),
            [task(1, 3.0, deadline=t), task(2, 2.0, deadline=t + 1)],
        )
        queue, released = release(queue, t, headroom=4.0, release_fraction=1.0)
        assert [t_.id for t_ in released] == [1]
        assert [t_.id for t_ in queue.pending] == [2]

    def test_occupancy_tracks_load(self):
        queue, _ = enqueue(DeferredQueue(10.0), [task(1, 2.0), task(2, 3.0)])
        assert queue.occupancy == 5.0
        queue, released = release(queue, 0, headroom=2.0, release_fraction=1.0)
        assert [t.id for t in released] == [1]
        assert queue.occupancy == 3.0


def test_task_validation():
    with pytest.raises(DomainError):
        Task(deadline_step=5, id=1, arrival_step=0, load=0.0)
    with pytest.raises(DomainError):
        Task(deadline_step=0, id=1, arrival_step=5, load=1.0)
