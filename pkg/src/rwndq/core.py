"""Per-output-port RWNDQ controller.

Each port holds one local window shared equally by the flows it counts.
SYN-ACKs and FIN-ACK/RSTs move the flow count and rescale the window; a
free-running timer nudges the window toward a target queue occupancy of
``alpha * B``; passing ACKs get their advertised window lowered to the
local window.

Windows and the increment accumulator are kept in fixed point with
``FRAC_BITS`` fractional bits, so open/close rescaling round-trips to within
a few ulps instead of drifting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .packet import (
    DEFAULT_MSS,
    InvalidScale,
    Packet,
    decode_and_clear_scale,
    field_for_window,
    peek_scale,
    set_window_field,
)

FRAC_BITS = 32
ONE = 1 << FRAC_BITS


class FlowCountUnderflow(RuntimeError):
    """A close arrived while no flow was counted (e.g. a duplicate FIN)."""


class StampOutcome(Enum):
    REWRITTEN = "rewritten"
    UNCHANGED = "unchanged"


class StampMode(str, Enum):
    # Stamp with the window of the port the data of this flow leaves through.
    DATA_PORT = "data_port"
    # Stamp with the window of the port the ACK itself leaves through.
    DEPARTURE_PORT = "departure_port"


@dataclass(frozen=True)
class RwndqParams:
    T: float = 100e-6
    M: int = 10
    B: int = 128 * 1024
    alpha: float = 0.25
    idle_timeout: float = 1.0
    min_window: int = DEFAULT_MSS

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.B <= 0:
            raise ValueError("B must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if not self.idle_timeout > 0:
            raise ValueError("idle_timeout must be positive")
        if not 0 <= self.min_window <= self.B:
            raise ValueError("min_window must be in [0, B]")

    @property
    def target(self) -> float:
        return self.alpha * self.B


def to_fixed(x) -> int:
    return round(x * ONE)


@dataclass(eq=False)
class RwndqPortState:
    params: RwndqParams = field(default_factory=RwndqParams)
    rwnd_fp: int | None = None
    beta: int = 0
    gamma_fp: int = 0
    big_gamma: int = 0
    mss: int = 0
    slow_start: bool = True
    last_data_at: float = 0.0
    invalid_scales: int = 0
    underflows: int = 0

    def __post_init__(self):
        self._target_fp = to_fixed(self.params.target)
        self._floor_fp = self.params.min_window * ONE
        if self.rwnd_fp is None:
            self.rwnd_fp = self._target_fp

    @classmethod
    def with_window(cls, params: RwndqParams, rwnd: float, beta: int, **kw) -> RwndqPortState:
        return cls(params=params, rwnd_fp=to_fixed(rwnd), beta=beta, **kw)

    @property
    def rwnd(self) -> float:
        return self.rwnd_fp / ONE

    @property
    def rwnd_bytes(self) -> int:
        return self.rwnd_fp >> FRAC_BITS

    @property
    def gamma(self) -> float:
        return self.gamma_fp / ONE

    def _reset(self) -> None:
        self.rwnd_fp = self._target_fp
        self.slow_start = True

    def _floor(self) -> None:
        if self.rwnd_fp < self._floor_fp:
            self.rwnd_fp = self._floor_fp

    def on_flow_open(self) -> None:
        b = self.beta
        if b <= 0:
            self._reset()
            b = 0
        else:
            self.rwnd_fp = self.rwnd_fp * b // (b + 1)
            self._floor()
        self.beta = b + 1

    def on_flow_close(self) -> None:
        if self.beta <= 0:
            self.beta = 0
            self.underflows += 1
            raise FlowCountUnderflow("close with no counted flows")
        self.beta -= 1
        b = self.beta
        if b >= 1:
            self.rwnd_fp = self.rwnd_fp * (b + 1) // b
        else:
            self._reset()

    def on_timer_tick(self, q: int) -> None:
        p = self.params
        target = self._target_fp
        # gamma += kappa * MSS / M with kappa = 1 - q / target
        self.gamma_fp += (target - (q << FRAC_BITS)) * self.mss * ONE // (target * p.M)
        self.big_gamma += 1
        if self.big_gamma < p.M:
            return
        if self.slow_start:
            self.rwnd_fp += 2 * self.mss * ONE
        elif self.beta > 0:
            self.rwnd_fp += self.gamma_fp // self.beta
        if q >= p.target:
            self.slow_start = False
        self.gamma_fp = 0
        self.big_gamma = 0
        self._floor()

    def on_data_packet(self, pkt: Packet, now: float) -> None:
        n = pkt.tcp.payload_len
        if n > self.mss:
            self.mss = n
        self.last_data_at = now

    def on_idle_check(self, now: float) -> None:
        if self.beta > 0 and now - self.last_data_at >= self.params.idle_timeout:
            self.beta = 0
            self._reset()

    def stamp_ack(self, pkt: Packet, *, clear: bool = True) -> StampOutcome:
        """Lower the ACK's advertised window to this port's window if it is larger.

        ``clear=False`` reads the scale without consuming it, for switches
        that are not the last hop before the receiving host.
        """
        try:
            scale = decode_and_clear_scale(pkt) if clear else peek_scale(pkt)
        except InvalidScale:
            self.invalid_scales += 1
            scale = 0
        rwnd = self.rwnd_fp >> FRAC_BITS
        if rwnd < (pkt.tcp.rwnd_field << scale):
            set_window_field(pkt, field_for_window(rwnd, scale))
            return StampOutcome.REWRITTEN
        return StampOutcome.UNCHANGED
