"""Per-flow and per-port records plus the statistics reported over them."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

MOUSE = "mouse"
ELEPHANT = "elephant"


class NoCompletions(ValueError):
    """No mice flow finished, which usually means the scenario deadlocked."""


@dataclass
class FlowRecord:
    flow_id: int
    src: str
    dst: str
    cls: str
    start: float
    size: int | None
    delivered: int = 0
    fct: float | None = None
    retransmissions: int = 0
    # (time s, cumulative delivered bytes), only kept for elephants
    samples: list = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.fct is not None

    def delivered_at(self, t: float) -> float:
        """Cumulative delivered bytes at time t, linear between samples."""
        s = self.samples
        if not s:
            return 0.0
        times = [x[0] for x in s]
        i = bisect.bisect_right(times, t)
        if i == 0:
            return 0.0 if t < times[0] else float(s[0][1])
        if i == len(s):
            return float(s[-1][1])
        (t0, b0), (t1, b1) = s[i - 1], s[i]
        return b0 + (b1 - b0) * (t - t0) / (t1 - t0)


@dataclass
class PortRecord:
    port_id: str
    drops: int
    marks: int
    mean_q: float
    max_q: int
    # (time s, cumulative occupancy integral in byte-seconds)
    area_samples: list = field(default_factory=list)

    def mean_occupancy(self, t0: float, t1: float) -> float:
        """Time-averaged queue length in bytes over [t0, t1] (sample-grid endpoints)."""
        times = [x[0] for x in self.area_samples]
        i0 = bisect.bisect_left(times, t0 - 1e-12)
        i1 = bisect.bisect_right(times, t1 + 1e-12) - 1
        if i1 <= i0:
            raise ValueError("window does not span two samples")
        (ta, aa), (tb, ab) = self.area_samples[i0], self.area_samples[i1]
        return (ab - aa) / (tb - ta)


@dataclass
class FctStats:
    avg: float
    std: float
    max: float
    p99: float
    count: int


def fct_stats(fcts) -> FctStats:
    """Mean, population std, max and nearest-rank 99th percentile."""
    xs = sorted(fcts)
    n = len(xs)
    if n == 0:
        raise NoCompletions("no completed flows")
    mean = math.fsum(xs) / n
    var = math.fsum((x - mean) ** 2 for x in xs) / n
    rank = max(math.ceil(0.99 * n), 1)
    return FctStats(avg=mean, std=math.sqrt(var), max=xs[-1], p99=xs[rank - 1], count=n)


def jain_index(rates) -> float:
    xs = list(rates)
    if not xs:
        raise ValueError("no rates")
    if any(x < 0 for x in xs):
        raise ValueError("rates must be non-negative")
    top = max(xs)
    if top == 0:
        raise ValueError("all rates are zero")
    # scale by the largest rate so tiny or huge values neither underflow nor overflow
    ys = [x / top for x in xs]
    return math.fsum(ys) ** 2 / (len(ys) * math.fsum(y * y for y in ys))


def goodput(record: FlowRecord, window: tuple[float, float]) -> float:
    """Application bytes delivered (no retransmitted duplicates) over the window, in bit/s."""
    t0, t1 = window
    if t1 <= t0:
        raise ValueError("empty window")
    return (record.delivered_at(t1) - record.delivered_at(t0)) * 8 / (t1 - t0)


def goodput_over(record: FlowRecord, windows) -> float:
    """Goodput across a union of disjoint windows."""
    total_bytes = 0.0
    total_time = 0.0
    for t0, t1 in windows:
        if t1 > t0:
            total_bytes += record.delivered_at(t1) - record.delivered_at(t0)
            total_time += t1 - t0
    if total_time == 0:
        raise ValueError("windows have zero total length")
    return total_bytes * 8 / total_time


def subtract_interval(window: tuple[float, float], hole: tuple[float, float]) -> list[tuple[float, float]]:
    a, b = window
    h0, h1 = hole
    out = []
    if h0 > a:
        out.append((a, min(b, h0)))
    if h1 < b:
        out.append((max(a, h1), b))
    return [w for w in out if w[1] > w[0]]


@dataclass
class MetricsRecord:
    flows: list[FlowRecord]
    ports: list[PortRecord]
    summary: dict
    bottleneck: str
    incast_window: tuple[float, float] | None = None

    def mice(self) -> list[FlowRecord]:
        return [f for f in self.flows if f.cls == MOUSE]

    def elephants(self) -> list[FlowRecord]:
        return [f for f in self.flows if f.cls == ELEPHANT]

    def port(self, port_id: str) -> PortRecord:
        return next(p for p in self.ports if p.port_id == port_id)

    @property
    def total_drops(self) -> int:
        return sum(p.drops for p in self.ports)
