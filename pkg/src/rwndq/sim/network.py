"""Hosts, switches, output ports and the static topology they sit in.

Every node transmits through output ports. A port is a FIFO with a byte
count ``q`` (the packet being serialized still counts) and an admission
policy: DropTail, ECN marking, or RWNDQ window stamping, each followed by
the same capacity check.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from ..aqm import EcnMarkerState, RunningAvg32State, ecn_mark
from ..core import FlowCountUnderflow, RwndqParams, RwndqPortState, StampMode
from ..packet import (
    ACK,
    FIN,
    MAX_SCALE,
    RST,
    SYN,
    Packet,
    addr,
    ip_checksum_ok,
    tcp_checksum_ok,
)
from ..tcp import ShimTable, TcpReceiver
from .engine import (
    DEQUEUE_COMPLETE,
    IDLE_CHECK,
    NS_PER_S,
    PACKET_ARRIVAL,
    RWNDQ_TICK,
    Simulator,
    ns,
)

DROPTAIL = "droptail"
RWNDQ = "rwndq"
ECN = "ecn_dctcp"
AQM_KINDS = (DROPTAIL, RWNDQ, ECN)

UNBOUNDED = 1 << 62


class InvariantViolation(RuntimeError):
    pass


class AsymmetricRoute(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    rate: float = 1e9
    propagation: float = 25e-6

    def serialization_ns(self, size: int) -> int:
        return size * 8 * NS_PER_S // int(self.rate)


@dataclass
class AqmConfig:
    kind: str = DROPTAIL
    rwndq: RwndqParams | None = None
    stamp_mode: StampMode = StampMode.DATA_PORT
    threshold_fraction: float = 0.25
    use_average: bool = False
    avg_sample_period: float = 48e-6


class Port:
    """Output queue of one node toward one neighbour."""

    def __init__(self, net: Network, node, peer, link: Link, capacity: int,
                 aqm: AqmConfig | None = None):
        self.net = net
        self.node = node
        self.peer = peer
        self.link = link
        self.id = f"{node.name}->{peer.name}"
        self.capacity = capacity
        self.kind = aqm.kind if aqm else DROPTAIL
        self.rwndq: RwndqPortState | None = None
        self.ecn: EcnMarkerState | None = None
        if self.kind == RWNDQ:
            self.rwndq = RwndqPortState(params=aqm.rwndq)
        elif self.kind == ECN:
            self.ecn = EcnMarkerState(aqm.threshold_fraction, aqm.use_average,
                                      RunningAvg32State(aqm.avg_sample_period))
        self.queue: deque[Packet] = deque()
        self.q = 0
        self.busy = False
        self.drops = 0
        self.marks = 0
        self.enqueued_bytes = 0
        self.dequeued_bytes = 0
        self.max_q = 0
        self._area = 0
        self._area_t = 0
        self.to_host = isinstance(peer, Host)
        self._prop = ns(link.propagation)
        self._ns_per_byte_num = 8 * NS_PER_S
        self._rate = int(link.rate)

    def area(self, now: int) -> int:
        """Integral of q over time, in byte-nanoseconds, up to ``now``."""
        return self._area + self.q * (now - self._area_t)

    def admit(self, pkt: Packet) -> bool:
        net = self.net
        now = net.sim.now
        kind = self.kind
        if kind == RWNDQ:
            self.node.rwndq_hook(self, pkt, now)
        elif kind == ECN:
            if ecn_mark(self.ecn, pkt, self.q, self.capacity, now / NS_PER_S):
                self.marks += 1
        size = pkt.size_on_wire
        if self.q + size > self.capacity:
            self.drops += 1
            net.dropped += 1
            return False
        self._area += self.q * (now - self._area_t)
        self._area_t = now
        self.queue.append(pkt)
        self.q += size
        self.enqueued_bytes += size
        if self.q > self.max_q:
            self.max_q = self.q
        if not self.busy:
            self._start(now)
        return True

    def _start(self, now: int) -> None:
        self.busy = True
        size = self.queue[0].size_on_wire
        self.net.sim.schedule(now + size * self._ns_per_byte_num // self._rate,
                              DEQUEUE_COMPLETE, self.id, self._done)

    def _done(self, _arg) -> None:
        net = self.net
        now = net.sim.now
        pkt = self.queue.popleft()
        size = pkt.size_on_wire
        self._area += self.q * (now - self._area_t)
        self._area_t = now
        self.q -= size
        self.dequeued_bytes += size
        net.on_wire += 1
        net.sim.schedule(now + self._prop, PACKET_ARRIVAL, self.peer.name, self.peer.arrive, pkt)
        if self.queue:
            self._start(now)
        else:
            self.busy = False


class Switch:
    def __init__(self, net: Network, name: str, aqm: AqmConfig):
        self.net = net
        self.name = name
        self.aqm = aqm
        self.ports: list[Port] = []
        self.routes: dict[int, Port] = {}
        self.stamp_mode = aqm.stamp_mode
        self.stamp_violations = 0

    def arrive(self, pkt: Packet) -> None:
        self.net.on_wire -= 1
        self.routes[pkt.flow.dst_addr].admit(pkt)

    def rwndq_hook(self, port: Port, pkt: Packet, now: int) -> None:
        """RWNDQ processing at output-queue admission.

        SYN-ACKs open and FIN-ACK/RSTs close a flow on both the departure
        port and the paired port (the one leading back toward the packet's
        source, which carries that flow's opposite direction).
        """
        t = pkt.tcp
        flags = t.flags
        state = port.rwndq
        if t.payload_len:
            state.on_data_packet(pkt, now / NS_PER_S)
        paired = self.routes.get(pkt.flow.src_addr)
        if paired is not None and (paired is port or paired.rwndq is None):
            paired = None
        if flags & SYN and flags & ACK:
            state.on_flow_open()
            if paired is not None:
                paired.rwndq.on_flow_open()
        elif (flags & FIN and flags & ACK) or flags & RST:
            for st in (state, paired.rwndq if paired is not None else None):
                if st is None:
                    continue
                try:
                    st.on_flow_close()
                except FlowCountUnderflow:
                    self.net.diagnostics["flow_count_underflows"] += 1
        if flags & ACK:
            stamper = state
            if self.stamp_mode is StampMode.DATA_PORT and paired is not None:
                stamper = paired.rwndq
            scale = t.reserved if t.reserved <= MAX_SCALE else 0
            # the scale bits are consumed by the last switch before the host
            stamper.stamp_ack(pkt, clear=port.to_host)
            if (t.rwnd_field << scale) > stamper.rwnd_bytes:
                if self.net.strict:
                    raise InvariantViolation(f"{port.id}: ACK window above stamping port rwnd")
                self.stamp_violations += 1

    def rwndq_ports(self) -> list[Port]:
        return [p for p in self.ports if p.rwndq is not None]

    def start_timers(self) -> None:
        ports = self.rwndq_ports()
        if not ports:
            return
        params = self.aqm.rwndq
        period = ns(params.T)
        sim = self.net.sim
        state = {"k": 0}
        start = sim.now

        def tick(_arg):
            for p in ports:
                p.rwndq.on_timer_tick(p.q)
            state["k"] += 1
            sim.schedule(start + (state["k"] + 1) * period, RWNDQ_TICK, self.name, tick)

        sim.schedule(start + period, RWNDQ_TICK, self.name, tick)

        idle_period = ns(params.idle_timeout)

        def idle(_arg):
            now_s = sim.now / NS_PER_S
            for p in ports:
                p.rwndq.on_idle_check(now_s)
            sim.schedule(sim.now + idle_period, IDLE_CHECK, self.name, idle)

        sim.schedule(start + idle_period, IDLE_CHECK, self.name, idle)


class Host:
    def __init__(self, net: Network, name: str, address: int, *, shim: bool = True):
        self.net = net
        self.sim = net.sim
        self.name = name
        self.addr = address
        self.nic: Port | None = None
        self.shim = ShimTable() if shim else None
        self.conns: dict = {}
        self._next_port = 10000
        self.receiver_factory = None

    @property
    def now(self) -> int:
        return self.sim.now

    def alloc_port(self) -> int:
        p = self._next_port
        self._next_port = p + 1 if p < 65535 else 10000
        return p

    def send(self, pkt: Packet) -> None:
        if self.shim is not None:
            self.shim.process_outgoing(pkt)
        self.net.injected += 1
        self.nic.admit(pkt)

    def arrive(self, pkt: Packet) -> None:
        net = self.net
        net.on_wire -= 1
        net.delivered += 1
        if net.verify_checksums and not (ip_checksum_ok(pkt) and tcp_checksum_ok(pkt)):
            net.diagnostics["bad_checksums"] += 1
            if net.strict:
                raise InvariantViolation(f"{self.name}: packet delivered with invalid checksum")
            return
        key = pkt.flow.reverse()
        conn = self.conns.get(key)
        flags = pkt.tcp.flags
        if conn is None:
            if flags & SYN and not flags & ACK and self.receiver_factory is not None:
                conn = self.receiver_factory(self, key)
                self.conns[key] = conn
            else:
                net.diagnostics["stray_packets"] += 1
                return
        if isinstance(conn, TcpReceiver):
            if flags & SYN:
                reply = conn.on_syn(pkt)
            elif flags & FIN:
                reply = conn.on_fin(pkt)
            elif pkt.tcp.payload_len:
                reply = conn.on_data(pkt)
            else:
                reply = None
            if reply is not None:
                self.send(reply)
        else:
            conn.on_packet(pkt)


@dataclass
class TopologySpec:
    kind: str = "star"
    sender_hosts: int = 16
    receiver_hosts: int = 1
    racks: int = 3
    hosts_per_rack: int = 7
    link_rate: float = 1e9
    propagation: float = 25e-6
    buffer: int = 128 * 1024
    aqm_scope: str = "all"


@dataclass
class Topology:
    hosts: list[Host] = field(default_factory=list)
    switches: list[Switch] = field(default_factory=list)
    senders: list[Host] = field(default_factory=list)
    receivers: list[Host] = field(default_factory=list)
    links: list[tuple[str, str, Link]] = field(default_factory=list)
    bottleneck: Port | None = None

    def ports(self) -> list[Port]:
        out = [h.nic for h in self.hosts]
        for s in self.switches:
            out.extend(s.ports)
        return out

    def switch_ports(self) -> list[Port]:
        return [p for s in self.switches for p in s.ports]

    def path(self, src: Host, dst: Host) -> list[str]:
        """Node names a packet from src to dst visits."""
        names = [src.name]
        node = src.nic.peer
        seen = 0
        while node is not dst:
            if isinstance(node, Host) or dst.addr not in node.routes:
                raise AsymmetricRoute(f"no route from {src.name} to {dst.name} past {node.name}")
            names.append(node.name)
            node = node.routes[dst.addr].peer
            seen += 1
            if seen > len(self.switches) + 1:
                raise AsymmetricRoute(f"routing loop from {src.name} to {dst.name}")
        names.append(dst.name)
        return names

    def validate_symmetric(self) -> None:
        for a in self.hosts:
            for b in self.hosts:
                if a is b:
                    continue
                if self.path(a, b) != self.path(b, a)[::-1]:
                    raise AsymmetricRoute(f"route {a.name}->{b.name} is not the reverse of "
                                          f"{b.name}->{a.name}")


class Network:
    """Owns the simulator, the topology and the global packet counters."""

    def __init__(self, sim: Simulator, *, verify_checksums: bool = True, strict: bool = True):
        self.sim = sim
        self.verify_checksums = verify_checksums
        self.strict = strict
        self.injected = 0
        self.delivered = 0
        self.dropped = 0
        self.on_wire = 0
        self.diagnostics = {"bad_checksums": 0, "flow_count_underflows": 0, "stray_packets": 0}
        self.topology: Topology | None = None

    def in_queues(self) -> int:
        return sum(len(p.queue) for p in self.topology.ports())

    def check_conservation(self) -> None:
        inflight = self.in_queues() + self.on_wire
        if self.injected != self.delivered + self.dropped + inflight:
            raise InvariantViolation(
                f"packet conservation: injected={self.injected} delivered={self.delivered} "
                f"dropped={self.dropped} in_flight={inflight}")


def _connect(net: Network, topo: Topology, a, b, link: Link, cap_ab: int, cap_ba: int,
             aqm_a: AqmConfig | None, aqm_b: AqmConfig | None) -> tuple[Port, Port]:
    pa = Port(net, a, b, link, cap_ab, aqm_a)
    pb = Port(net, b, a, link, cap_ba, aqm_b)
    for node, port in ((a, pa), (b, pb)):
        if isinstance(node, Host):
            node.nic = port
        else:
            node.ports.append(port)
    topo.links.append((a.name, b.name, link))
    return pa, pb


def _port_to(node, peer) -> Port:
    return next(p for p in node.ports if p.peer is peer)


def _route_tree(switches: list[Switch], hosts: list[Host]) -> None:
    """Static routes by breadth-first search from each host; on a tree these are symmetric."""
    for h in hosts:
        frontier = [(h.nic.peer, _port_to(h.nic.peer, h))]
        seen = {h.name}
        while frontier:
            nxt = []
            for node, port_back in frontier:
                if node.name in seen or isinstance(node, Host):
                    continue
                seen.add(node.name)
                node.routes[h.addr] = port_back
                for p in node.ports:
                    if p.peer.name not in seen and isinstance(p.peer, Switch):
                        nxt.append((p.peer, _port_to(p.peer, node)))
            frontier = nxt


def build_topology(net: Network, spec: TopologySpec, aqm: AqmConfig, *, shim: bool = True) -> Topology:
    """Star (one switch) or leaf-core (sender racks and one receiver rack behind ToRs)."""
    topo = Topology()
    link = Link(spec.link_rate, spec.propagation)
    plain = AqmConfig(kind=DROPTAIL)

    def host(name, address):
        h = Host(net, name, address, shim=shim)
        topo.hosts.append(h)
        return h

    if spec.kind == "star":
        if spec.sender_hosts < 1 or spec.receiver_hosts < 1:
            raise ValueError("star topology needs at least one sender and one receiver host")
        sw = Switch(net, "sw0", aqm)
        topo.switches.append(sw)
        for i in range(spec.sender_hosts):
            topo.senders.append(host(f"s{i}", addr(10, 0, i // 250, i % 250 + 1)))
        for i in range(spec.receiver_hosts):
            topo.receivers.append(host(f"r{i}", addr(10, 1, i // 250, i % 250 + 1)))
        for h in topo.hosts:
            _connect(net, topo, h, sw, link, UNBOUNDED, spec.buffer, None, aqm)
        topo.bottleneck = _port_to(sw, topo.receivers[0])
    elif spec.kind == "leaf_core":
        if spec.racks < 1 or spec.hosts_per_rack < 1:
            raise ValueError("leaf_core topology needs racks >= 1 and hosts_per_rack >= 1")
        core = Switch(net, "core", aqm)
        tor_aqm = aqm if spec.aqm_scope == "all" else plain
        topo.switches.append(core)
        for r in range(spec.racks + 1):
            tor = Switch(net, f"tor{r}", tor_aqm)
            topo.switches.append(tor)
            _connect(net, topo, tor, core, link, spec.buffer, spec.buffer, tor_aqm, aqm)
            for i in range(spec.hosts_per_rack):
                h = host(f"h{r}_{i}", addr(10, r, 0, i + 1))
                _connect(net, topo, h, tor, link, UNBOUNDED, spec.buffer, None, tor_aqm)
                (topo.receivers if r == spec.racks else topo.senders).append(h)
        topo.bottleneck = next(p for p in core.ports if p.peer.name == f"tor{spec.racks}")
    else:
        raise ValueError(f"unknown topology kind {spec.kind!r}")

    _route_tree(topo.switches, topo.hosts)
    topo.validate_symmetric()
    net.topology = topo
    return topo
