"""Traffic generators: synchronized incast epochs and long-lived elephants.

A mouse is one short request/response connection. Each incast client (one
per sender host and parallel connection) issues ``blocks_per_request``
requests back to back, opening the next connection as soon as the previous
response is fully acknowledged, like a benchmark client with keep-alive off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .metrics import ELEPHANT, MOUSE
from .sim.engine import APP_START, ns

MICE_PORT = 80
ELEPHANT_PORT = 5001


@dataclass
class IncastSpec:
    n_senders: int = 64
    block_size: int = 11_500
    blocks_per_request: int = 100
    parallel_connections: int = 1
    epochs: int = 1
    epoch_times: list = field(default_factory=lambda: [0.0])
    start_jitter: float = 1e-3

    def __post_init__(self):
        if self.n_senders < 1:
            raise ValueError("n_senders must be >= 1")
        if self.block_size <= 0:
            raise ValueError("block_size must be positive")
        if self.blocks_per_request < 1 or self.parallel_connections < 1:
            raise ValueError("blocks_per_request and parallel_connections must be >= 1")
        if len(self.epoch_times) != self.epochs:
            raise ValueError("epoch_times must list one start time per epoch")

    @property
    def total_flows(self) -> int:
        return self.n_senders * self.parallel_connections * self.blocks_per_request * self.epochs


@dataclass
class ElephantSpec:
    n_flows: int = 8
    start: float = 0.0
    duration: float = 5.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.n_flows < 0:
            raise ValueError("n_flows must be >= 0")


def gen_incast(spec: IncastSpec, scn) -> int:
    """Schedule every incast epoch; returns the number of mice flows that will run.

    Senders are the first ``n_senders`` logical clients, mapped round-robin
    onto the topology's sender hosts; all request from the first receiver.
    """
    topo = scn.topology
    dst = topo.receivers[0]
    hosts = topo.senders
    count = 0
    for epoch, t0 in enumerate(spec.epoch_times):
        for i in range(spec.n_senders):
            src = hosts[i % len(hosts)]
            for _c in range(spec.parallel_connections):
                jitter = scn.rng.random() * spec.start_jitter
                client = _Client(scn, src, dst, spec.block_size, spec.blocks_per_request)
                scn.sim.schedule(ns(t0 + jitter), APP_START, src.name, client.next_block)
                count += spec.blocks_per_request
    return count


class _Client:
    def __init__(self, scn, src, dst, block_size, blocks):
        self.scn = scn
        self.src = src
        self.dst = dst
        self.block_size = block_size
        self.remaining = blocks

    def next_block(self, _arg=None) -> None:
        if self.remaining <= 0:
            return
        self.remaining -= 1
        self.scn.open_flow(self.src, self.dst, self.block_size, MOUSE, MICE_PORT,
                           on_all_acked=self._acked)

    def _acked(self, _sender) -> None:
        self.next_block()


def gen_elephants(spec: ElephantSpec, scn) -> int:
    topo = scn.topology
    dst = topo.receivers[0]
    hosts = topo.senders
    senders = []

    def start(_arg):
        for i in range(spec.n_flows):
            rec, sender = scn.open_flow(hosts[i % len(hosts)], dst, None, ELEPHANT, ELEPHANT_PORT)
            senders.append(sender)

    def stop(_arg):
        for s in senders:
            s.stop_data()

    if spec.n_flows:
        scn.sim.schedule(ns(spec.start), APP_START, "elephants", start)
        scn.sim.schedule(ns(spec.start + spec.duration), APP_START, "elephants", stop)
    return spec.n_flows
