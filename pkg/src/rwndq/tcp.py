"""Simplified TCP endpoints and the end-host window-scale shim.

Senders are unmodified Reno (NewReno recovery) or DCTCP; the only thing the
switch changes is the advertised window they read off ACKs, and they honor
``min(cwnd, peer_rwnd)`` like any stack would.

Endpoints talk to their host through a small surface: ``host.now`` (ns),
``host.send(pkt)`` and ``host.sim.schedule(...)``.

Sequence numbers count payload bytes from 0; SYN and FIN are signalled by
flags and do not consume sequence space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .packet import (
    ACK,
    CE,
    DEFAULT_MSS,
    ECE,
    ECT0,
    FIN,
    NOT_ECT,
    RST,
    SYN,
    FlowKey,
    Packet,
    encode_scale,
    field_for_window,
    make_packet,
)
from .sim.engine import DELACK, NS_PER_S, RTO_EXPIRY, ns

INFINITE = 1 << 62


class Phase(str, Enum):
    SLOW_START = "slow_start"
    CONGESTION_AVOIDANCE = "congestion_avoidance"
    FAST_RECOVERY = "fast_recovery"


class ConnState(str, Enum):
    CLOSED = "closed"
    SYN_SENT = "syn_sent"
    ESTABLISHED = "established"
    FIN_WAIT = "fin_wait"
    DONE = "done"


@dataclass
class SenderConfig:
    mss: int = DEFAULT_MSS
    init_cwnd_segments: int = 10
    rto_min: float = 0.2
    rto_init: float = 1.0
    rto_max: float = 60.0
    scale: int = 2
    rcv_buffer: int = 256 * 1024
    cwnd_validation: bool = True
    dctcp_g: float = 1 / 16


@dataclass
class TcpSenderState:
    mss: int = DEFAULT_MSS
    cwnd: int = 10 * DEFAULT_MSS
    ssthresh: int = INFINITE
    phase: Phase = Phase.SLOW_START
    dup_acks: int = 0
    rto: float = 1.0
    rto_min: float = 0.2
    rto_max: float = 60.0
    snd_una: int = 0
    snd_nxt: int = 0
    high_seq: int = 0
    recover: int = 0
    peer_rwnd: int = 65535
    scale: int = 0
    srtt: float | None = None
    rttvar: float = 0.0

    @property
    def flight(self) -> int:
        return self.snd_nxt - self.snd_una


def effective_send_window(s: TcpSenderState) -> int:
    return min(s.cwnd, s.peer_rwnd)


class TcpSender:
    """Data-sending endpoint of one connection (the active opener)."""

    ect = NOT_ECT

    def __init__(self, host, flow: FlowKey, size: int | None, cfg: SenderConfig | None = None,
                 *, record=None, on_all_acked=None, on_closed=None):
        self.host = host
        self.flow = flow
        self.cfg = cfg = cfg or SenderConfig()
        self.size = INFINITE if size is None else size
        self.record = record
        self.on_all_acked = on_all_acked
        self.on_closed = on_closed
        self.s = TcpSenderState(mss=cfg.mss, cwnd=cfg.init_cwnd_segments * cfg.mss,
                                rto=max(cfg.rto_init, cfg.rto_min), rto_min=cfg.rto_min,
                                rto_max=cfg.rto_max)
        self.conn = ConnState.CLOSED
        self.retransmissions = 0
        self.target = f"{host.name}:{flow.src_port}"
        self._deadline: int | None = None
        self._timer_at: int | None = None
        self._rtt_seq: int | None = None
        self._rtt_start = 0
        self._syn_sent_at = 0
        self._syn_retx = False
        self._all_acked_fired = False

    # -- timers -----------------------------------------------------------

    def _arm(self, delay_s: float) -> None:
        now = self.host.now
        d = now + ns(delay_s)
        self._deadline = d
        if self._timer_at is None or self._timer_at > d:
            self._timer_at = d
            self.host.sim.schedule(d, RTO_EXPIRY, self.target, self._on_timer)

    def _disarm(self) -> None:
        self._deadline = None

    def _on_timer(self, _arg) -> None:
        now = self.host.now
        if self._timer_at == now:
            self._timer_at = None
        d = self._deadline
        if d is None:
            return
        if now >= d:
            self._deadline = None
            self.on_timeout()
        elif self._timer_at is None:
            self._timer_at = d
            self.host.sim.schedule(d, RTO_EXPIRY, self.target, self._on_timer)

    # -- output -----------------------------------------------------------

    def _emit(self, flags: int, seq: int = 0, length: int = 0, *, retransmit=False) -> Packet:
        cfg = self.cfg
        pkt = make_packet(
            self.flow, flags, seq=seq, payload_len=length,
            rwnd_field=field_for_window(cfg.rcv_buffer, cfg.scale),
            ecn=self.ect if length else NOT_ECT,
            wscale=cfg.scale if flags & SYN else None,
            created_at=self.host.now,
        )
        pkt.retransmit = retransmit
        if retransmit and length:
            self.retransmissions += 1
        self.host.send(pkt)
        return pkt

    def open(self) -> None:
        self.conn = ConnState.SYN_SENT
        self._syn_sent_at = self.host.now
        self._emit(SYN)
        self._arm(self.s.rto)

    def _send_segment(self, seq: int, length: int) -> None:
        s = self.s
        retx = seq < s.high_seq
        if not retx and self._rtt_seq is None:
            self._rtt_seq = seq + length
            self._rtt_start = self.host.now
        self._emit(ACK, seq, length, retransmit=retx)
        end = seq + length
        if end > s.high_seq:
            s.high_seq = end
        if self._deadline is None:
            self._arm(s.rto)

    def try_send(self) -> None:
        if self.conn is not ConnState.ESTABLISHED:
            return
        s = self.s
        mss = s.mss
        size = self.size
        while s.snd_nxt < size:
            wnd = s.cwnd if s.cwnd < s.peer_rwnd else s.peer_rwnd
            flight = s.snd_nxt - s.snd_una
            seg = size - s.snd_nxt
            if seg > mss:
                seg = mss
            usable = wnd - flight
            if usable < seg:
                if flight == 0 and usable > 0:
                    seg = usable
                else:
                    break
            self._send_segment(s.snd_nxt, seg)
            s.snd_nxt += seg
        if s.snd_una >= size and self.conn is ConnState.ESTABLISHED:
            self._send_fin()
        elif s.snd_nxt == s.snd_una and s.snd_nxt < size and self._deadline is None:
            # zero window: persist probe after one RTO
            self._arm(s.rto)

    def _send_fin(self) -> None:
        self.conn = ConnState.FIN_WAIT
        self._emit(FIN, self.size)
        self._arm(self.s.rto)

    def stop_data(self) -> None:
        """Application stops producing; the connection closes once sent data is acked."""
        if self.size == INFINITE:
            self.size = max(self.s.snd_nxt, self.s.snd_una)
            if self.conn is ConnState.ESTABLISHED and self.s.snd_una >= self.size:
                self._send_fin()

    # -- input ------------------------------------------------------------

    def on_packet(self, pkt: Packet) -> None:
        flags = pkt.tcp.flags
        if flags & RST:
            self._close()
            return
        if self.conn is ConnState.SYN_SENT:
            if flags & SYN and flags & ACK:
                self._on_synack(pkt)
            return
        if flags & FIN:
            if self.conn is ConnState.FIN_WAIT:
                self._close()
            return
        if flags & ACK and self.conn is ConnState.ESTABLISHED:
            self.on_ack(pkt)
            self.try_send()

    def _on_synack(self, pkt: Packet) -> None:
        s = self.s
        s.scale = pkt.tcp.wscale or 0
        s.peer_rwnd = pkt.tcp.rwnd_field << s.scale
        if not self._syn_retx:
            self._rtt_sample((self.host.now - self._syn_sent_at) / NS_PER_S)
        self._disarm()
        self.conn = ConnState.ESTABLISHED
        self.try_send()

    def _close(self) -> None:
        self._disarm()
        self.conn = ConnState.DONE
        if self.on_closed is not None:
            self.on_closed(self)

    def _rtt_sample(self, r: float) -> None:
        s = self.s
        if s.srtt is None:
            s.srtt = r
            s.rttvar = r / 2
        else:
            s.rttvar = 0.75 * s.rttvar + 0.25 * abs(s.srtt - r)
            s.srtt = 0.875 * s.srtt + 0.125 * r
        s.rto = min(max(s.rto_min, s.srtt + 4 * s.rttvar), s.rto_max)

    def on_ack(self, pkt: Packet) -> None:
        """Reno/NewReno response to one ACK; the caller transmits afterwards."""
        s = self.s
        t = pkt.tcp
        s.peer_rwnd = t.rwnd_field << s.scale
        ack = t.ack_no
        mss = s.mss
        if ack > s.snd_una:
            acked = ack - s.snd_una
            was_limited = (s.snd_nxt - s.snd_una) + mss > s.cwnd
            s.snd_una = ack
            if s.snd_nxt < ack:
                s.snd_nxt = ack
            if self._rtt_seq is not None and ack >= self._rtt_seq:
                self._rtt_sample((self.host.now - self._rtt_start) / NS_PER_S)
                self._rtt_seq = None
            self.on_new_ack(pkt, acked)
            if s.phase is Phase.FAST_RECOVERY:
                if ack >= s.recover:
                    s.cwnd = max(s.ssthresh, mss)
                    s.phase = Phase.CONGESTION_AVOIDANCE
                    s.dup_acks = 0
                else:
                    # partial ACK: retransmit the next hole, deflate
                    self._send_segment(ack, min(mss, s.high_seq - ack))
                    s.cwnd = max(s.cwnd - acked + mss, mss)
            else:
                s.dup_acks = 0
                if was_limited or not self.cfg.cwnd_validation:
                    self._grow(acked)
            if s.snd_una >= s.snd_nxt:
                self._disarm()
            else:
                self._arm(s.rto)
            if s.snd_una >= self.size and not self._all_acked_fired:
                self._all_acked_fired = True
                if self.on_all_acked is not None:
                    self.on_all_acked(self)
        elif ack == s.snd_una and s.snd_nxt > s.snd_una and not t.payload_len:
            s.dup_acks += 1
            if s.phase is Phase.FAST_RECOVERY:
                s.cwnd += mss
            elif s.dup_acks == 3:
                self._enter_recovery()

    def _grow(self, acked: int) -> None:
        s = self.s
        if s.cwnd < s.ssthresh:
            s.phase = Phase.SLOW_START
            s.cwnd += min(acked, s.mss)
        else:
            s.phase = Phase.CONGESTION_AVOIDANCE
            s.cwnd += max(s.mss * s.mss // s.cwnd, 1)

    def _enter_recovery(self) -> None:
        s = self.s
        s.ssthresh = max(s.cwnd // 2, 2 * s.mss)
        s.recover = s.high_seq
        s.phase = Phase.FAST_RECOVERY
        self._send_segment(s.snd_una, min(s.mss, s.high_seq - s.snd_una))
        s.cwnd = s.ssthresh + 3 * s.mss
        self._rtt_seq = None

    def on_new_ack(self, pkt: Packet, acked: int) -> None:
        """Hook for sender variants; called before window growth."""

    def on_timeout(self) -> None:
        s = self.s
        s.rto = min(s.rto * 2, s.rto_max)
        if self.conn is ConnState.SYN_SENT:
            self._syn_retx = True
            self._emit(SYN)
            self._arm(s.rto)
            return
        if self.conn is ConnState.FIN_WAIT:
            self._emit(FIN, self.size)
            self._arm(s.rto)
            return
        if self.conn is not ConnState.ESTABLISHED:
            return
        if s.snd_nxt == s.snd_una:
            # persist probe: one byte past the window
            if s.snd_nxt < self.size:
                self._send_segment(s.snd_nxt, 1)
                s.snd_nxt += 1
            self._arm(s.rto)
            return
        self.rto_response()
        self.try_send()

    def rto_response(self) -> None:
        s = self.s
        s.ssthresh = max(s.cwnd // 2, 2 * s.mss)
        s.cwnd = s.mss
        s.phase = Phase.SLOW_START
        s.dup_acks = 0
        s.recover = s.high_seq
        s.snd_nxt = s.snd_una
        self._rtt_seq = None


class DctcpSender(TcpSender):
    ect = ECT0

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.alpha = 0.0
        self.g = self.cfg.dctcp_g
        self.marked_bytes = 0
        self.acked_bytes = 0
        self._window_end = 0

    def on_new_ack(self, pkt: Packet, acked: int) -> None:
        s = self.s
        self.acked_bytes += acked
        if pkt.tcp.flags & ECE:
            self.marked_bytes += acked
        if s.snd_una >= self._window_end:
            self.end_of_window()
            self._window_end = s.snd_nxt

    def end_of_window(self) -> None:
        s = self.s
        frac = self.marked_bytes / self.acked_bytes if self.acked_bytes else 0.0
        self.alpha = (1 - self.g) * self.alpha + self.g * frac
        if self.marked_bytes and s.phase is not Phase.FAST_RECOVERY:
            s.cwnd = max(int(s.cwnd * (1 - self.alpha / 2)), s.mss)
            s.ssthresh = s.cwnd
            s.phase = Phase.CONGESTION_AVOIDANCE
        self.marked_bytes = 0
        self.acked_bytes = 0


@dataclass
class TcpReceiverState:
    rcv_nxt: int = 0
    buffer: int = 256 * 1024
    scale: int = 2
    ooo: dict = field(default_factory=dict)
    ooo_bytes: int = 0
    fin_seen: bool = False

    @property
    def free(self) -> int:
        return self.buffer - self.ooo_bytes


class TcpReceiver:
    """Passive side of a connection: cumulative ACK per segment, window = free buffer."""

    def __init__(self, host, flow: FlowKey, *, buffer: int = 256 * 1024, scale: int = 2,
                 delayed_ack: bool = False, delack_timeout: float = 0.04, on_deliver=None):
        self.host = host
        # local-perspective key: src is this host
        self.flow = flow
        self.r = TcpReceiverState(buffer=buffer, scale=scale)
        self.delayed_ack = delayed_ack
        self.delack_timeout = delack_timeout
        self.on_deliver = on_deliver
        self._pending_acks = 0
        self._pending_ece = False
        self._delack_armed = False
        self.target = f"{host.name}:{flow.src_port}"

    def _ack(self, flags: int = ACK, ece: bool = False) -> Packet:
        r = self.r
        return make_packet(
            self.flow, flags | (ECE if ece else 0), ack_no=r.rcv_nxt,
            rwnd_field=field_for_window(r.free, r.scale),
            wscale=r.scale if flags & SYN else None,
            created_at=self.host.now,
        )

    def on_syn(self, pkt: Packet) -> Packet:
        return self._ack(SYN | ACK)

    def on_fin(self, pkt: Packet) -> Packet:
        self.r.fin_seen = True
        return self._ack(FIN | ACK)

    def on_data(self, pkt: Packet) -> Packet | None:
        """Absorb one segment; returns the ACK to send (None while an ACK is delayed)."""
        r = self.r
        t = pkt.tcp
        seq, end = t.seq, t.seq + t.payload_len
        ce = pkt.ip.ecn == CE
        in_order = False
        if seq <= r.rcv_nxt < end:
            in_order = True
            delivered_from = r.rcv_nxt
            r.rcv_nxt = end
            ooo = r.ooo
            if ooo:
                for k in sorted(ooo):
                    if k > r.rcv_nxt:
                        break
                    e = ooo.pop(k)
                    r.ooo_bytes -= e - k
                    if e > r.rcv_nxt:
                        r.rcv_nxt = e
            if self.on_deliver is not None:
                self.on_deliver(r.rcv_nxt - delivered_from)
        elif seq > r.rcv_nxt and seq not in r.ooo and t.payload_len <= r.free:
            r.ooo[seq] = end
            r.ooo_bytes += end - seq
        if not self.delayed_ack or not in_order or r.ooo or ce or self._pending_ece:
            self._pending_acks = 0
            self._pending_ece = False
            return self._ack(ece=ce)
        self._pending_acks += 1
        if self._pending_acks >= 2:
            self._pending_acks = 0
            return self._ack()
        if not self._delack_armed:
            self._delack_armed = True
            self.host.sim.schedule_in(ns(self.delack_timeout), DELACK, self.target, self._delack_fire)
        return None

    def _delack_fire(self, _arg) -> None:
        self._delack_armed = False
        if self._pending_acks:
            self._pending_acks = 0
            self.host.send(self._ack())


class ShimTable:
    """Hypervisor shim: remembers each open flow's scale and stamps it into outgoing ACKs."""

    def __init__(self):
        self.entries: dict[FlowKey, int] = {}
        self.unknown_acks = 0

    def __len__(self) -> int:
        return len(self.entries)

    def process_outgoing(self, pkt: Packet) -> None:
        t = pkt.tcp
        flags = t.flags
        if flags & SYN:
            self.entries[pkt.flow] = t.wscale or 0
        if flags & ACK:
            scale = self.entries.get(pkt.flow)
            if scale is None:
                self.unknown_acks += 1
                scale = 0
            encode_scale(pkt, scale)
        if flags & (FIN | RST):
            self.entries.pop(pkt.flow, None)


def shim_process_outgoing(table: ShimTable, pkt: Packet) -> None:
    table.process_outgoing(pkt)
