"""Acceptance criteria, each at its stated tolerance.

Scenario configs come from ``configs/`` so the CLI reproduces the same runs.
Every test records a one-line PASS/FAIL verdict (printed in the terminal
summary) before asserting.
"""

import random
import time
from pathlib import Path

import pytest

from rwndq import report
from rwndq.config import ScenarioConfig, load
from rwndq.core import RwndqParams, RwndqPortState
from rwndq.metrics import goodput, jain_index
from rwndq.packet import (
    ACK,
    CE,
    ECT0,
    ECT1,
    FIN,
    NOT_ECT,
    PSH,
    FlowKey,
    full_checksum,
    ip_words,
    make_packet,
    set_ecn,
    set_window_field,
    tcp_words,
)
from rwndq.scenario import Scenario
from traces import flow_count_trace, replay

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
B = 131072
_runs: dict = {}


def run(name):
    """Run a published config once per session; returns (record, scenario, wall seconds)."""
    if name not in _runs:
        cfg = ScenarioConfig.from_resolved(load(CONFIGS / f"{name}.json"))
        scn = Scenario(cfg)
        t0 = time.perf_counter()
        rec = scn.run()
        _runs[name] = (rec, scn, time.perf_counter() - t0)
    return _runs[name]


def test_c1_queue_regulation(verdict):
    rec, scn, wall = run("elephants_rwndq")
    occ = rec.port(rec.bottleneck).mean_occupancy(1.0, 5.0)
    ok = 0.15 * B <= occ <= 0.35 * B and wall < 60
    assert verdict(1, "queue regulation", ok,
                   f"mean occupancy {occ / B:.3f} B in [0.15, 0.35]; runtime {wall:.1f} s < 60 s")


def test_c2_fairness(verdict):
    rec, scn, wall = run("elephants_rwndq")
    rates = [goodput(f, (3.0, 5.0)) for f in rec.elephants()]
    j = jain_index(rates)
    assert verdict(2, "fairness", j >= 0.95,
                   f"Jain index {j:.5f} >= 0.95 over the last 2 s ({len(rates)} elephants)")


def test_c3_incast_drop_reduction(verdict):
    rq, _, wall_rq = run("incast_rwndq")
    dt, _, wall_dt = run("incast_droptail")
    d_rq, d_dt = rq.summary["total_drops"], dt.summary["total_drops"]
    ok = d_dt > 0 and d_rq <= 0.6 * d_dt and max(wall_rq, wall_dt) < 120
    assert verdict(3, "incast drop reduction", ok,
                   f"drops {d_rq} vs DropTail {d_dt} (ratio {d_rq / max(d_dt, 1):.3f} <= 0.6); "
                   f"runtime {wall_rq:.1f} s / {wall_dt:.1f} s < 120 s")


def test_c4_incast_with_elephants(verdict):
    rq, _, _ = run("mixed_rwndq")
    dt, _, _ = run("mixed_droptail")
    a, b = rq.summary, dt.summary
    drops = a["total_drops"] / max(b["total_drops"], 1)
    std = a["mice_fct_std_s"] / b["mice_fct_std_s"]
    mx = a["mice_fct_max_s"] / b["mice_fct_max_s"]
    complete = a["mice_completed"] == a["mice_flows"]
    ok = b["total_drops"] > 0 and drops <= 0.2 and std <= 0.2 and mx <= 0.1 and complete
    detail = (f"drops {a['total_drops']} vs {b['total_drops']} (ratio {drops:.4f} <= 0.2), FCT std ratio {std:.4f} <= 0.2, "
              f"max FCT ratio {mx:.4f} <= 0.1 (two orders: {'yes' if mx <= 0.01 else 'no'}); "
              f"mice done {a['mice_completed']}/{a['mice_flows']}")
    assert verdict(4, "incast with elephants", ok, detail)


def test_c5_elephant_preservation(verdict):
    rq, _, _ = run("mixed_rwndq")
    dt, _, _ = run("mixed_droptail")
    g_rq = rq.summary["elephant_goodput_outside_incast_bps"]
    g_dt = dt.summary["elephant_goodput_outside_incast_bps"]
    ratio = g_rq / g_dt
    assert verdict(5, "elephant preservation", ratio >= 0.85,
                   f"goodput outside incast {g_rq / 1e6:.1f} vs {g_dt / 1e6:.1f} Mb/s "
                   f"(ratio {ratio:.3f} >= 0.85)")


def test_c6_checksum_oracle(verdict):
    rng = random.Random(6)
    t0 = time.perf_counter()
    mismatches = 0
    n = 100_000
    for i in range(n):
        flow = FlowKey(rng.getrandbits(32), rng.getrandbits(32), rng.getrandbits(16), rng.getrandbits(16))
        flags = ACK | rng.choice([0, PSH, FIN])
        pkt = make_packet(flow, flags, seq=rng.getrandbits(32), ack_no=rng.getrandbits(32),
                          payload_len=rng.randrange(0, 1461), rwnd_field=rng.getrandbits(16),
                          ecn=rng.choice([NOT_ECT, ECT0, ECT1, CE]))
        if i % 2:
            set_window_field(pkt, rng.getrandbits(16))
            ok = pkt.tcp.checksum == full_checksum(tcp_words(pkt, 0))
        else:
            set_ecn(pkt, rng.choice([NOT_ECT, ECT0, ECT1, CE]))
            ok = pkt.ip.checksum == full_checksum(ip_words(pkt, 0))
        mismatches += not ok
    wall = time.perf_counter() - t0
    assert verdict(6, "checksum oracle", mismatches == 0 and wall < 10,
                   f"{mismatches} mismatches in {n} window/ECN rewrites; runtime {wall:.1f} s < 10 s")


def test_c7_flow_count_oracle(verdict):
    rng = random.Random(7)
    params = RwndqParams()
    n = 10_000
    failures = 0
    for _ in range(n):
        try:
            replay(flow_count_trace(rng), params)
        except AssertionError:
            failures += 1
    assert verdict(7, "flow-count oracle", failures == 0,
                   f"{failures} of {n} traces diverged from the reference counter")


def test_c8_fixed_points(verdict):
    p = RwndqParams(B=B, alpha=0.25, M=10)
    target = p.target
    # kappa = 0 at Q = alpha*B
    s = RwndqPortState.with_window(p, 9_000, 3, mss=1460, slow_start=False)
    s.on_timer_tick(int(target))
    kappa_zero = s.gamma_fp == 0
    for _ in range(p.M - 1):
        s.on_timer_tick(int(target))
    kappa_zero &= s.rwnd == 9_000
    # open/close churn returns to alpha*B
    worst = 0.0
    rng = random.Random(8)
    for _ in range(500):
        s = RwndqPortState(params=RwndqParams(B=B, alpha=0.25, min_window=0))
        k = rng.randrange(1, 100)
        for _ in range(k):
            s.on_flow_open()
        for _ in range(k - 1):
            s.on_flow_close()
        worst = max(worst, abs(s.rwnd - target))
    churn_ok = worst <= 1.0
    # slow start ends exactly at the first update boundary with Q >= alpha*B
    s = RwndqPortState.with_window(p, 10_000, 1, mss=1460)
    qs = [0] * 10 + [40_000] * 9 + [100] + [int(target)] * 10
    exits = []
    for i, q in enumerate(qs):
        was = s.slow_start
        s.on_timer_tick(q)
        if was and not s.slow_start:
            exits.append(i)
    ss_ok = exits == [29]
    ok = kappa_zero and churn_ok and ss_ok
    assert verdict(8, "controller fixed points", ok,
                   f"kappa=0 at target {kappa_zero}; churn error {worst:.2e} B <= 1; "
                   f"slow-start exit at tick {exits} == [29]")


def test_c9_determinism(verdict, tmp_path):
    doc = load(CONFIGS / "mixed_rwndq.json")
    doc["duration_s"] = 0.6
    doc["workload"]["incast"].update(n_senders=16, blocks_per_request=5, epoch_times_s=[0.2])
    outs = []
    for d in ("a", "b"):
        rec = Scenario(ScenarioConfig.from_resolved(doc)).run()
        report.write_run(rec, doc, tmp_path / d)
        outs.append({n: (tmp_path / d / n).read_bytes() for n in ("flows.csv", "ports.csv", "summary.csv")})
    same = outs[0] == outs[1]
    assert verdict(9, "determinism", same, "flows.csv, ports.csv, summary.csv byte-identical across two runs")


@pytest.mark.parametrize("name", ["mixed_rwndq", "incast_rwndq", "elephants_rwndq"])
def test_c10_stamping_safety(verdict, name):
    rec, scn, _ = run(name)
    bad = rec.summary["bad_checksums"]
    violations = sum(sw.stamp_violations for sw in scn.topology.switches)
    ok = scn.cfg.strict and scn.cfg.verify_checksums and bad == 0 and violations == 0
    assert verdict(10, f"stamping safety ({name})", ok,
                   f"{bad} bad checksums, {violations} over-window ACKs, strict in-engine assertion on")
