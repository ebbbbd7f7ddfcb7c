"""Deterministic event loop.

Simulated time is an integer count of nanoseconds, so ties are exact and
periodic timers never drift. Events with equal time run in the order they
were scheduled.
"""

from __future__ import annotations

import heapq
from typing import Any, Callable, NamedTuple, TextIO

NS_PER_S = 1_000_000_000

# Event kinds.
PACKET_ARRIVAL = "packet_arrival"
DEQUEUE_COMPLETE = "dequeue_complete"
RWNDQ_TICK = "rwndq_tick"
IDLE_CHECK = "idle_check"
RTO_EXPIRY = "rto_expiry"
APP_START = "app_start"
SIM_END = "sim_end"
SAMPLE = "sample"
DELACK = "delack"


def ns(seconds: float) -> int:
    return round(seconds * NS_PER_S)


class SchedulingError(RuntimeError):
    """An event was scheduled before the current clock."""


class Event(NamedTuple):
    time: int
    seq: int
    kind: str
    target: str
    action: Callable[[Any], None]
    arg: Any = None


class Simulator:
    def __init__(self, trace: TextIO | None = None):
        self.now = 0
        self._heap: list[tuple] = []
        self._seq = 0
        self._stopped = False
        self.trace = trace
        self.events_run = 0

    def schedule(self, time: int, kind: str, target: str, action, arg=None) -> int:
        if time < self.now:
            raise SchedulingError(f"{kind} for {target} at {time} ns, clock is {self.now} ns")
        seq = self._seq
        self._seq = seq + 1
        heapq.heappush(self._heap, (time, seq, kind, target, action, arg))
        return seq

    def schedule_in(self, delay: int, kind: str, target: str, action, arg=None) -> int:
        return self.schedule(self.now + delay, kind, target, action, arg)

    def pending(self) -> list[Event]:
        return [Event(*e) for e in sorted(self._heap)]

    def stop(self) -> None:
        self._stopped = True

    @property
    def stopped(self) -> bool:
        return self._stopped

    def run_until(self, t: int) -> None:
        """Run every event with time <= t, then leave the clock at t (unless stopped)."""
        heap = self._heap
        pop = heapq.heappop
        trace = self.trace
        n = 0
        while heap and heap[0][0] <= t and not self._stopped:
            time, seq, kind, target, action, arg = pop(heap)
            self.now = time
            if trace is not None:
                self._trace(time, seq, kind, target, arg)
            action(arg)
            n += 1
        self.events_run += n
        if not self._stopped and self.now < t:
            self.now = t

    def _trace(self, time, seq, kind, target, arg) -> None:
        flow = getattr(arg, "flow", "")
        detail = arg.describe() if hasattr(arg, "describe") else ""
        self.trace.write(f"{time / NS_PER_S:.9f}\t{seq}\t{kind}\t{target}\t{flow}\t{detail}\n")
