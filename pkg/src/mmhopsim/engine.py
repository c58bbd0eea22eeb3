"""Deterministic single-threaded discrete-event engine.

Simulation time is integer nanoseconds.  Events fire in strict
(fire_at, seq) order, where seq is assigned in scheduling order, so two
events scheduled for the same instant run FIFO.  The full processed-event
sequence is a pure function of the schedule calls, which makes traces
replayable and hashable.
"""

from __future__ import annotations

import heapq
from typing import Callable

SECOND = 1_000_000_000
MILLISECOND = 1_000_000
MICROSECOND = 1_000


def seconds(s: float) -> int:
    return round(s * SECOND)


class SchedulingInPastError(ValueError):
    """Raised when an event is scheduled before the current clock."""


class EventHandle:
    __slots__ = ("cancelled",)

    def __init__(self):
        self.cancelled = False

    def cancel(self):
        self.cancelled = True


class Simulator:
    """Event loop owning the clock and the pending-event heap."""

    def __init__(self, tracer: Callable[[int, int, str], None] | None = None):
        self.now = 0
        self._heap: list[tuple[int, int, EventHandle, str, Callable, tuple]] = []
        self._seq = 0
        self.processed = 0
        self.tracer = tracer

    def schedule(self, fire_at: int, kind: str, fn: Callable, *args) -> EventHandle:
        if fire_at < self.now:
            raise SchedulingInPastError(
                f"cannot schedule {kind!r} at {fire_at} ns; clock is {self.now} ns"
            )
        handle = EventHandle()
        heapq.heappush(self._heap, (fire_at, self._seq, handle, kind, fn, args))
        self._seq += 1
        return handle

    def schedule_in(self, delay: int, kind: str, fn: Callable, *args) -> EventHandle:
        return self.schedule(self.now + delay, kind, fn, *args)

    def run(self, until: int) -> int:
        """Process every event with fire_at <= until; clock ends at until."""
        count = 0
        heap = self._heap
        pop = heapq.heappop
        tracer = self.tracer
        while heap and heap[0][0] <= until:
            fire_at, seq, handle, kind, fn, args = pop(heap)
            if handle.cancelled:
                continue
            self.now = fire_at
            if tracer is not None:
                tracer(fire_at, seq, kind)
            fn(*args)
            count += 1
        if until > self.now:
            self.now = until
        self.processed += count
        return count
