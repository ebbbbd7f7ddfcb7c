"""Build a network from a scenario config, drive the workloads, collect metrics."""

from __future__ import annotations

import random

from . import config as cfgmod
from .config import ScenarioConfig
from .metrics import (
    ELEPHANT,
    FlowRecord,
    MetricsRecord,
    NoCompletions,
    PortRecord,
    fct_stats,
    goodput_over,
    jain_index,
    subtract_interval,
)
from .packet import FlowKey
from .sim.engine import NS_PER_S, SAMPLE, SIM_END, Simulator, ns
from .sim.network import Network, build_topology
from .tcp import DctcpSender, TcpReceiver, TcpSender
from .workloads import gen_elephants, gen_incast


class Scenario:
    def __init__(self, cfg: ScenarioConfig, trace=None):
        self.cfg = cfg
        self.sim = Simulator(trace=trace)
        self.net = Network(self.sim, verify_checksums=cfg.verify_checksums, strict=cfg.strict)
        self.topology = build_topology(self.net, cfg.topology, cfg.aqm, shim=cfg.shim)
        self.rng = random.Random(cfg.seed)
        self.flows: list[FlowRecord] = []
        self._by_key: dict[FlowKey, FlowRecord] = {}
        self._senders: list[TcpSender] = []
        self.mice_expected = 0
        self.mice_done = 0
        self.last_mouse_done: float | None = None
        self._sample_times: list[float] = []
        self._area_samples = {p.id: [] for p in self.topology.switch_ports()}
        sender_cls = DctcpSender if cfg.sender_type == "dctcp" else TcpSender
        self._sender_cls = sender_cls
        for h in self.topology.receivers:
            h.receiver_factory = self._make_receiver

    # -- flows ------------------------------------------------------------

    def open_flow(self, src, dst, size, cls, dst_port, on_all_acked=None):
        key = FlowKey(src.addr, dst.addr, src.alloc_port(), dst_port)
        rec = FlowRecord(flow_id=len(self.flows), src=src.name, dst=dst.name, cls=cls,
                         start=self.sim.now / NS_PER_S, size=size)
        self.flows.append(rec)
        self._by_key[key] = rec
        sender = self._sender_cls(src, key, size, self.cfg.sender, record=rec,
                                  on_all_acked=on_all_acked, on_closed=self._on_closed)
        src.conns[key] = sender
        self._senders.append(sender)
        sender.open()
        return rec, sender

    def _on_closed(self, sender) -> None:
        sender.host.conns.pop(sender.flow, None)
        sender.record.retransmissions = sender.retransmissions

    def _make_receiver(self, host, key: FlowKey) -> TcpReceiver:
        rec = self._by_key[key.reverse()]
        sim = self.sim

        def deliver(n: int) -> None:
            rec.delivered += n
            if rec.size is not None and rec.fct is None and rec.delivered >= rec.size:
                now = sim.now / NS_PER_S
                rec.fct = now - rec.start
                self.mice_done += 1
                self.last_mouse_done = now
                if self.mice_done == self.mice_expected and self.cfg.elephants is None:
                    sim.stop()

        return TcpReceiver(host, key, buffer=self.cfg.sender.rcv_buffer, scale=self.cfg.sender.scale,
                           delayed_ack=self.cfg.delayed_ack, on_deliver=deliver)

    # -- sampling ---------------------------------------------------------

    def _sample(self, _arg=None) -> None:
        now = self.sim.now
        t = now / NS_PER_S
        self._sample_times.append(t)
        for p in self.topology.switch_ports():
            self._area_samples[p.id].append((t, p.area(now) / NS_PER_S))
        for f in self.flows:
            if f.cls == ELEPHANT:
                f.samples.append((t, f.delivered))
        nxt = now + ns(self.cfg.sample_interval)
        self.sim.schedule(nxt, SAMPLE, "metrics", self._sample)

    # -- run --------------------------------------------------------------

    def run(self) -> MetricsRecord:
        cfg = self.cfg
        sim = self.sim
        for sw in self.topology.switches:
            sw.start_timers()
        if cfg.incast is not None:
            self.mice_expected = gen_incast(cfg.incast, self)
        if cfg.elephants is not None:
            gen_elephants(cfg.elephants, self)
        sim.schedule(0, SAMPLE, "metrics", self._sample)
        end = ns(cfg.duration)
        sim.schedule(end, SIM_END, "sim", lambda _a: None)
        sim.run_until(end)
        self._sample_final()
        if self.net.strict:
            self.net.check_conservation()
        for s in self._senders:
            s.record.retransmissions = s.retransmissions
        return self.collect()

    def _sample_final(self) -> None:
        t = self.sim.now / NS_PER_S
        if not self._sample_times or self._sample_times[-1] < t:
            self._sample_times.append(t)
            for p in self.topology.switch_ports():
                self._area_samples[p.id].append((t, p.area(self.sim.now) / NS_PER_S))
            for f in self.flows:
                if f.cls == ELEPHANT:
                    f.samples.append((t, f.delivered))

    def collect(self) -> MetricsRecord:
        cfg = self.cfg
        end = self.sim.now / NS_PER_S
        ports = []
        for p in self.topology.switch_ports():
            mean_q = p.area(self.sim.now) / self.sim.now if self.sim.now else 0.0
            ports.append(PortRecord(p.id, p.drops, p.marks, mean_q, p.max_q, self._area_samples[p.id]))
        bottleneck = self.topology.bottleneck.id
        incast_window = None
        if cfg.incast is not None:
            first = min(cfg.incast.epoch_times)
            last = self.last_mouse_done if self.mice_done == self.mice_expected else end
            incast_window = (first, max(last, first))
        rec = MetricsRecord(flows=self.flows, ports=ports, summary={}, bottleneck=bottleneck,
                            incast_window=incast_window)
        rec.summary = summarize(rec, cfg, end, self)
        return rec


def summarize(rec: MetricsRecord, cfg: ScenarioConfig, end: float, scn: Scenario) -> dict:
    nan = float("nan")
    out: dict = {"aqm": cfg.aqm.kind, "sender": cfg.sender_type}
    mice = rec.mice()
    done = [f.fct for f in mice if f.completed]
    out["mice_flows"] = len(mice)
    out["mice_completed"] = len(done)
    try:
        st = fct_stats(done)
        out.update(mice_fct_avg_s=st.avg, mice_fct_std_s=st.std, mice_fct_max_s=st.max,
                   mice_fct_p99_s=st.p99)
    except NoCompletions:
        out.update(mice_fct_avg_s=nan, mice_fct_std_s=nan, mice_fct_max_s=nan, mice_fct_p99_s=nan)
    els = rec.elephants()
    out["elephant_flows"] = len(els)
    gp_all = gp_out = jain = nan
    if els and cfg.elephants is not None:
        e = cfg.elephants
        window = (e.start + cfg.goodput_warmup, min(e.start + e.duration, end))
        if window[1] > window[0]:
            rates = [goodput_over(f, [window]) for f in els]
            gp_all = sum(rates) / len(rates)
            if any(rates):
                jain = jain_index(rates)
            windows = [window]
            if rec.incast_window is not None:
                windows = subtract_interval(window, rec.incast_window)
            if windows:
                gp_out = sum(goodput_over(f, windows) for f in els) / len(els)
    out["elephant_goodput_bps"] = gp_all
    out["elephant_goodput_outside_incast_bps"] = gp_out
    out["elephant_jain_index"] = jain
    out["total_drops"] = sum(p.drops for p in rec.ports)
    out["total_marks"] = sum(p.marks for p in rec.ports)
    b = rec.port(rec.bottleneck)
    out["bottleneck_drops"] = b.drops
    out["bottleneck_mean_q_bytes"] = b.mean_q
    out["bottleneck_max_q_bytes"] = b.max_q
    out["retransmissions"] = sum(f.retransmissions for f in rec.flows)
    out["injected_packets"] = scn.net.injected
    out["delivered_packets"] = scn.net.delivered
    out["bad_checksums"] = scn.net.diagnostics["bad_checksums"]
    out["flow_count_underflows"] = scn.net.diagnostics["flow_count_underflows"]
    out["sim_end_s"] = end
    out["seed"] = cfg.seed
    out["config_sha256"] = cfgmod.digest(cfg.resolved)
    return out


def run_scenario(cfg: ScenarioConfig | dict, trace=None) -> MetricsRecord:
    if isinstance(cfg, dict):
        cfg = ScenarioConfig.from_dict(cfg)
    return Scenario(cfg, trace=trace).run()
