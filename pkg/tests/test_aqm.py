from hypothesis import given
from hypothesis import strategies as st
from oracles import mean_of_last

from rwndq.aqm import (
    EcnMarkerState,
    RunningAvg32State,
    avg32_update,
    droptail_admit,
    ecn_mark,
)
from rwndq.packet import (
    ACK,
    CE,
    ECT0,
    ECT1,
    NOT_ECT,
    FlowKey,
    ip_checksum_ok,
    make_packet,
)

CAP = 131072
FLOW = FlowKey(1, 2, 10000, 80)


def pkt(ecn=ECT0):
    return make_packet(FLOW, ACK, seq=1, payload_len=1460, ecn=ecn)


def test_droptail_boundaries():
    assert droptail_admit(0, CAP, 1500)
    assert not droptail_admit(CAP, CAP, 1500)
    assert droptail_admit(CAP - 1500, CAP, 1500)
    assert not droptail_admit(CAP - 1499, CAP, 1500)


@given(st.lists(st.integers(40, 1500), max_size=300), st.lists(st.booleans(), max_size=300))
def test_droptail_never_exceeds_capacity(sizes, dequeue_flags):
    q = 0
    queue = []
    enq = deq = 0
    for size, pop in zip(sizes, dequeue_flags + [False] * len(sizes)):
        if droptail_admit(q, 8000, size):
            queue.append(size)
            q += size
            enq += size
        if pop and queue:
            s = queue.pop(0)
            q -= s
            deq += s
        assert 0 <= q <= 8000
        assert enq - deq == q


def test_avg32_constant_and_alternating():
    s = RunningAvg32State(sample_period=48e-6)
    for i in range(32):
        out = avg32_update(s, 1000, i * 48e-6)
    assert out == 1000
    s = RunningAvg32State(sample_period=48e-6)
    for i in range(32):
        out = avg32_update(s, 0 if i % 2 else 2000, i * 48e-6)
    assert out == 1000


@given(st.lists(st.integers(0, CAP), min_size=1, max_size=120))
def test_avg32_matches_bruteforce_mean(qs):
    s = RunningAvg32State(sample_period=1.0)
    for i, q in enumerate(qs):
        out = avg32_update(s, q, float(i))
        assert out == mean_of_last(qs[: i + 1])


def test_avg32_ignores_calls_within_sample_period():
    s = RunningAvg32State(sample_period=48e-6)
    avg32_update(s, 1000, 0.0)
    assert avg32_update(s, 9000, 10e-6) == 1000
    assert avg32_update(s, 3000, 48e-6) == 2000


def test_ecn_examples():
    st_ = EcnMarkerState(threshold_fraction=0.25)
    p = pkt(ECT0)
    assert ecn_mark(st_, p, int(0.30 * CAP), CAP)
    assert p.ip.ecn == CE and ip_checksum_ok(p)
    p = pkt(ECT1)
    assert not ecn_mark(st_, p, int(0.10 * CAP), CAP)
    assert p.ip.ecn == ECT1
    p = pkt(NOT_ECT)
    assert not ecn_mark(st_, p, CAP, CAP)
    assert p.ip.ecn == NOT_ECT


def test_ecn_threshold_is_inclusive():
    st_ = EcnMarkerState(threshold_fraction=0.25)
    assert ecn_mark(st_, pkt(), CAP // 4, CAP)
    assert not ecn_mark(st_, pkt(), CAP // 4 - 1, CAP)


@given(st.sampled_from([ECT0, ECT1]), st.integers(0, CAP))
def test_marked_packets_stay_checksum_valid(ecn, q):
    p = pkt(ecn)
    marked = ecn_mark(EcnMarkerState(), p, q, CAP)
    assert ip_checksum_ok(p)
    assert marked == (q >= 0.25 * CAP)


def test_ecn_on_average():
    st_ = EcnMarkerState(threshold_fraction=0.25, use_average=True)
    # an instantaneous spike does not move a warm average past the threshold
    for i in range(32):
        ecn_mark(st_, pkt(), 0, CAP, i * 48e-6)
    assert not ecn_mark(st_, pkt(), CAP, CAP, 32 * 48e-6)
