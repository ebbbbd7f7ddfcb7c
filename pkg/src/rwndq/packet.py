"""Header-level packet model and the arithmetic the switch needs on it.

Packets carry parsed header views instead of byte buffers. Checksums are
still bit-exact: they are computed over the canonical 16-bit word
serialization below, with the TCP payload modeled as zero bytes (zero words
contribute nothing to a one's-complement sum).

Canonical serialization
-----------------------
IPv4 header (10 words)::

    0  0x45 << 8 | tos            tos = dscp << 2 | ecn
    1  total_len
    2  ident
    3  flags/frag                 0x4000 (DF)
    4  ttl << 8 | protocol        protocol = 6
    5  checksum
    6  src_addr >> 16             7  src_addr & 0xFFFF
    8  dst_addr >> 16             9  dst_addr & 0xFFFF

TCP pseudo-header (6 words) followed by the TCP header (10 words)::

    src_hi src_lo dst_hi dst_lo 6 tcp_len
    0  src_port                   1  dst_port
    2  seq >> 16                  3  seq & 0xFFFF
    4  ack_no >> 16               5  ack_no & 0xFFFF
    6  data_offset << 12 | reserved << 8 | flags
    7  window                     8  checksum
    9  urgent pointer (0)

``reserved`` is the 4-bit field between the data offset and the flag byte;
the end-host shim uses it to carry the window-scale exponent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# TCP flag bits (low byte of header word 6).
FIN = 0x01
SYN = 0x02
RST = 0x04
PSH = 0x08
ACK = 0x10
URG = 0x20
ECE = 0x40
CWR = 0x80

# IP ECN codepoints.
NOT_ECT = 0b00
ECT1 = 0b01
ECT0 = 0b10
CE = 0b11

IP_HEADER = 20
TCP_HEADER = 20
HEADER_OVERHEAD = IP_HEADER + TCP_HEADER
MTU = 1500
DEFAULT_MSS = MTU - HEADER_OVERHEAD

MAX_SCALE = 14
MAX_WINDOW_FIELD = 0xFFFF

_PROTO_TCP = 6
_TTL = 64
_DF = 0x4000
_DATA_OFFSET_WORD = 5 << 12


class InvalidScale(ValueError):
    """Reserved bits hold a value that is not a valid scale exponent (> 14)."""


def _fold(total: int) -> int:
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def ones_sum(words) -> int:
    """One's-complement sum of 16-bit words with end-around carry."""
    return _fold(sum(words))


def full_checksum(words) -> int:
    """Internet checksum: complement of the one's-complement sum of ``words``."""
    return ~_fold(sum(words)) & 0xFFFF


def incremental_checksum_update(old_csum: int, old_field: int, new_field: int) -> int:
    """Patch a checksum after one 16-bit word changes, HC' = ~(~HC + ~m + m').

    Matches full recomputation whenever the header has some nonzero word
    outside the substituted one, which every IP or TCP header does.
    """
    total = (~old_csum & 0xFFFF) + (~old_field & 0xFFFF) + new_field
    return ~_fold(total) & 0xFFFF


def effective_window(field: int, scale: int) -> int:
    return field << scale


def field_for_window(window: int, scale: int) -> int:
    """Window in bytes to a 16-bit header field, clamped to 65535."""
    value = int(window) >> scale
    return MAX_WINDOW_FIELD if value > MAX_WINDOW_FIELD else value


def addr(a: int, b: int, c: int, d: int) -> int:
    return (a << 24) | (b << 16) | (c << 8) | d


def addr_str(value: int) -> str:
    return ".".join(str((value >> s) & 0xFF) for s in (24, 16, 8, 0))


@dataclass(frozen=True, order=True, slots=True)
class FlowKey:
    src_addr: int
    dst_addr: int
    src_port: int
    dst_port: int

    def reverse(self) -> FlowKey:
        return FlowKey(self.dst_addr, self.src_addr, self.dst_port, self.src_port)

    def __str__(self) -> str:
        return (f"{addr_str(self.src_addr)}:{self.src_port}"
                f">{addr_str(self.dst_addr)}:{self.dst_port}")


@dataclass(slots=True)
class TcpHeaderView:
    flags: int = 0
    rwnd_field: int = 0
    reserved: int = 0
    checksum: int = 0
    seq: int = 0
    ack_no: int = 0
    payload_len: int = 0
    # SYN-only option, kept as connection metadata rather than parsed bytes.
    wscale: int | None = None

    def flag_word(self) -> int:
        return _DATA_OFFSET_WORD | (self.reserved << 8) | self.flags


@dataclass(slots=True)
class Ipv4HeaderView:
    ecn: int = NOT_ECT
    checksum: int = 0
    total_len: int = HEADER_OVERHEAD
    dscp: int = 0

    def tos_word(self) -> int:
        return (0x45 << 8) | (self.dscp << 2) | self.ecn


@dataclass(slots=True)
class Packet:
    flow: FlowKey
    ip: Ipv4HeaderView
    tcp: TcpHeaderView
    created_at: int = 0
    size_on_wire: int = HEADER_OVERHEAD
    # Set by senders on retransmitted segments; not a header field.
    retransmit: bool = False
    uid: int = field(default=0, compare=False)

    @property
    def is_ack(self) -> bool:
        return bool(self.tcp.flags & ACK)

    def describe(self) -> str:
        t = self.tcp
        names = "".join(n for bit, n in ((SYN, "S"), (FIN, "F"), (RST, "R"), (ACK, "A"), (ECE, "E"))
                        if t.flags & bit)
        return f"{names or '.'} seq={t.seq} ack={t.ack_no} len={t.payload_len} win={t.rwnd_field}"


def ip_words(pkt: Packet, checksum: int | None = None) -> list[int]:
    ip = pkt.ip
    f = pkt.flow
    return [
        ip.tos_word(), ip.total_len & 0xFFFF, 0, _DF, (_TTL << 8) | _PROTO_TCP,
        ip.checksum if checksum is None else checksum,
        f.src_addr >> 16, f.src_addr & 0xFFFF, f.dst_addr >> 16, f.dst_addr & 0xFFFF,
    ]


def tcp_words(pkt: Packet, checksum: int | None = None) -> list[int]:
    """Pseudo-header plus TCP header words, in canonical order."""
    t = pkt.tcp
    f = pkt.flow
    seq = t.seq & 0xFFFFFFFF
    ack = t.ack_no & 0xFFFFFFFF
    return [
        f.src_addr >> 16, f.src_addr & 0xFFFF, f.dst_addr >> 16, f.dst_addr & 0xFFFF,
        _PROTO_TCP, (TCP_HEADER + t.payload_len) & 0xFFFF,
        f.src_port, f.dst_port, seq >> 16, seq & 0xFFFF, ack >> 16, ack & 0xFFFF,
        t.flag_word(), t.rwnd_field, t.checksum if checksum is None else checksum, 0,
    ]


def seal(pkt: Packet) -> Packet:
    """Compute both checksums from scratch."""
    pkt.ip.checksum = full_checksum(ip_words(pkt, 0))
    pkt.tcp.checksum = full_checksum(tcp_words(pkt, 0))
    return pkt


def ip_checksum_ok(pkt: Packet) -> bool:
    return ones_sum(ip_words(pkt)) == 0xFFFF


def tcp_checksum_ok(pkt: Packet) -> bool:
    return ones_sum(tcp_words(pkt)) == 0xFFFF


def make_packet(flow: FlowKey, flags: int, *, seq: int = 0, ack_no: int = 0,
                payload_len: int = 0, rwnd_field: int = 0, ecn: int = NOT_ECT,
                wscale: int | None = None, created_at: int = 0) -> Packet:
    size = HEADER_OVERHEAD + payload_len
    pkt = Packet(
        flow=flow,
        ip=Ipv4HeaderView(ecn=ecn, total_len=size),
        tcp=TcpHeaderView(flags=flags, rwnd_field=rwnd_field, seq=seq, ack_no=ack_no,
                          payload_len=payload_len, wscale=wscale),
        created_at=created_at,
        size_on_wire=size,
    )
    return seal(pkt)


def set_window_field(pkt: Packet, new_field: int) -> None:
    t = pkt.tcp
    if new_field != t.rwnd_field:
        t.checksum = incremental_checksum_update(t.checksum, t.rwnd_field, new_field)
        t.rwnd_field = new_field


def set_ecn(pkt: Packet, codepoint: int) -> None:
    ip = pkt.ip
    old = ip.tos_word()
    ip.ecn = codepoint
    ip.checksum = incremental_checksum_update(ip.checksum, old, ip.tos_word())


def encode_scale(pkt: Packet, scale: int) -> None:
    """Write a window-scale exponent into the reserved bits of an ACK."""
    if not pkt.tcp.flags & ACK:
        raise ValueError("scale is only carried on packets with the ACK flag")
    if not 0 <= scale <= MAX_SCALE:
        raise InvalidScale(scale)
    t = pkt.tcp
    old = t.flag_word()
    t.reserved = scale
    t.checksum = incremental_checksum_update(t.checksum, old, t.flag_word())


def peek_scale(pkt: Packet) -> int:
    scale = pkt.tcp.reserved
    if scale > MAX_SCALE:
        raise InvalidScale(scale)
    return scale


def decode_and_clear_scale(pkt: Packet) -> int:
    """Read the scale exponent and zero the reserved bits.

    The bits are cleared (and the checksum patched) even when the value is
    invalid, so the packet leaves checksum-valid; InvalidScale is raised after.
    """
    t = pkt.tcp
    scale = t.reserved
    if scale:
        old = t.flag_word()
        t.reserved = 0
        t.checksum = incremental_checksum_update(t.checksum, old, t.flag_word())
    if scale > MAX_SCALE:
        raise InvalidScale(scale)
    return scale
