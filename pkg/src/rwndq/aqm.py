"""DropTail and DCTCP-style ECN marking, the comparison queue disciplines."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .packet import CE, NOT_ECT, Packet, set_ecn

AVG_SLOTS = 32
# slack for float time stamps sitting exactly on a period boundary
_TIME_EPS = 1e-12


def droptail_admit(q: int, capacity: int, pkt_size: int) -> bool:
    """True when the packet fits; a packet that exactly fills the buffer is admitted."""
    return q + pkt_size <= capacity


@dataclass
class RunningAvg32State:
    sample_period: float = 48e-6
    samples: deque = field(default_factory=lambda: deque(maxlen=AVG_SLOTS))
    last_sample_at: float | None = None
    _total: int = 0

    def update(self, q: int, now: float) -> float:
        """Sample ``q`` if a period has elapsed and return the running mean."""
        last = self.last_sample_at
        if last is None or now - last >= self.sample_period - _TIME_EPS:
            if len(self.samples) == AVG_SLOTS:
                self._total -= self.samples[0]
            self.samples.append(q)
            self._total += q
            self.last_sample_at = now
        return self.average

    @property
    def average(self) -> float:
        n = len(self.samples)
        return self._total / n if n else 0.0


def avg32_update(state: RunningAvg32State, q: int, now: float) -> float:
    return state.update(q, now)


@dataclass
class EcnMarkerState:
    threshold_fraction: float = 0.25
    use_average: bool = False
    avg: RunningAvg32State = field(default_factory=RunningAvg32State)

    def __post_init__(self):
        if not 0 < self.threshold_fraction <= 1:
            raise ValueError("threshold_fraction must be in (0, 1]")


def ecn_mark(state: EcnMarkerState, pkt: Packet, q: int, capacity: int, now: float = 0.0) -> bool:
    """Set CE on an ECT packet when occupancy reaches the threshold. Returns True if marked."""
    level = state.avg.update(q, now) if state.use_average else q
    ecn = pkt.ip.ecn
    if ecn == NOT_ECT or ecn == CE:
        return False
    if level >= state.threshold_fraction * capacity:
        set_ecn(pkt, CE)
        return True
    return False
