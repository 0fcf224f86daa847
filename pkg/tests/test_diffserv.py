import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from qospdv.diffserv import (AclRule, CbwfqClass, CbwfqScheduler, PolicyEntry, PolicyError,
                             TrafficPolicy, WredProfile, classify_and_mark, wred_drop_decision,
                             wred_drop_probability, wred_update_avg)
from qospdv.engine import NS_PER_S, Simulator
from qospdv.netmodel import DSCP, LinkSpec, Packet, ScheduledPort
from qospdv.scenario import load_scenario

from gps_oracle import gps_service

TABLE5 = {"EF": 5, "AF11": 20, "AF12": 10, "AF13": 5, "AF41": 40, "AF42": 15, "AF43": 5}


def pkt(cls="AF11", payload=1472, seq=0, src="192.0.17.2"):
    p = Packet("f/" + cls, cls, "s", "d", src, seq, 4, payload, "udp", 0)
    p.dscp = DSCP.get(cls, 0)
    return p


def policy(weights=TABLE5, wred=None, limit=500):
    entries = [PolicyEntry(CbwfqClass(c, w, limit, priority=(c == "EF")), wred)
               for c, w in weights.items()]
    return TrafficPolicy("p", entries)


# ------------------------------------------------------------------ ACL

def reference_acl():
    return load_scenario("scenario3").acl


@pytest.mark.parametrize("src,expected", [
    ("192.0.17.1", "EF"),
    ("192.0.17.5", "AF41"),
    ("192.0.17.2", "AF11"),
    ("192.0.17.7", "AF43"),
    ("198.51.100.9", "BE"),
    ("2001:db8:17::5", "AF41"),
])
def test_classify_and_mark(src, expected):
    p = pkt(src=src)
    p.dscp = 0
    assert classify_and_mark(p, reference_acl()) == DSCP[expected]
    assert p.dscp == DSCP[expected]


def test_wildcard_mask_semantics_first_match_wins():
    # A /24 wildcard on the first rule captures the whole block.
    acl = [AclRule("EF", "192.0.17.1", "0.0.0.255", "EF"),
           AclRule("AF41", "192.0.17.5", "0.0.0.255", "AF41")]
    p = pkt(src="192.0.17.5")
    assert classify_and_mark(p, acl) == DSCP["EF"]
    assert not AclRule("x", "192.0.17.1", "0.0.0.255", "EF").matches("192.0.18.1")


def test_marking_is_idempotent():
    acl = reference_acl()
    for k in range(1, 8):
        p = pkt(src=f"192.0.17.{k}")
        first = classify_and_mark(p, acl)
        assert classify_and_mark(p, acl) == first


def test_acl_rejects_bad_config():
    with pytest.raises(PolicyError):
        AclRule("x", "192.0.2.1", "0.0.0.0", "AF99")
    with pytest.raises(PolicyError):
        AclRule("x", "192.0.2.1", "0.0.0.0", "EF", action="deny")


# ------------------------------------------------------------------ WRED

def test_wred_average_fixed_point_and_step():
    assert wred_update_avg(100, 100, 9) == 100
    assert wred_update_avg(0, 512, 9) == 1.0


def test_wred_average_converges_like_closed_form():
    avg = 0.0
    for _ in range(512):
        avg = wred_update_avg(avg, 512, 9)
    closed = 512 * (1 - (1 - 2 ** -9) ** 512)
    assert avg == pytest.approx(closed, rel=1e-12)
    assert 323 < avg < 324


PROFILE = WredProfile(9, 100, 200, 10)


def test_wred_probability_curve():
    assert wred_drop_probability(99, PROFILE) == 0.0
    assert wred_drop_probability(150, PROFILE) == pytest.approx(0.05)
    assert wred_drop_probability(200, PROFILE) == 1.0
    rng = random.Random(1)
    assert all(wred_drop_decision(99, PROFILE, rng) == "enqueue" for _ in range(1000))
    assert all(wred_drop_decision(200, PROFILE, rng) == "drop" for _ in range(1000))


def test_wred_monte_carlo_drop_fraction():
    rng = random.Random(2024)
    n = 100_000
    drops = sum(wred_drop_decision(150, PROFILE, rng) == "drop" for _ in range(n))
    assert abs(drops / n - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / n)


def test_wred_profile_validation():
    with pytest.raises(PolicyError):
        WredProfile(9, 200, 100, 10)
    with pytest.raises(PolicyError):
        WredProfile(9, 100, 200, 0)


# ------------------------------------------------------------------ CBWFQ

def test_policy_validation():
    with pytest.raises(PolicyError):
        TrafficPolicy("p", [PolicyEntry(CbwfqClass("AF11", 60)), PolicyEntry(CbwfqClass("AF12", 50))])
    with pytest.raises(PolicyError):
        TrafficPolicy("p", [PolicyEntry(CbwfqClass("AF11", 10)), PolicyEntry(CbwfqClass("AF11", 10))])


def test_empty_system_finish_tag_is_bits_over_weight():
    sched = CbwfqScheduler(policy(), 4_000_000, random.Random(0))
    assert sched.enqueue(pkt("AF11"), "AF11", 0) == "queued"
    assert sched.finish_tag_of_tail("AF11") == pytest.approx(1500 * 8 / 20)


def test_finish_tag_ratio_for_weights_20_and_10():
    sched = CbwfqScheduler(policy(), 4_000_000, random.Random(0))
    sched.enqueue(pkt("AF11"), "AF11", 0)
    sched.enqueue(pkt("AF12"), "AF12", 0)
    assert sched.finish_tag_of_tail("AF12") / sched.finish_tag_of_tail("AF11") == pytest.approx(2.0)


def test_tail_drop_at_queue_limit():
    sched = CbwfqScheduler(policy(limit=500), 4_000_000, random.Random(0))
    for i in range(500):
        assert sched.enqueue(pkt("AF11", seq=i), "AF11", 0) == "queued"
    assert sched.enqueue(pkt("AF11", seq=500), "AF11", 0) == "dropped_tail"


def test_wred_runs_before_tail_drop():
    sched = CbwfqScheduler(policy(wred=PROFILE, limit=1000), 4_000_000, random.Random(0))
    state = sched.class_state("AF11")
    state.avg = 250.0
    assert sched.enqueue(pkt("AF11"), "AF11", 0) == "dropped_wred"


def test_strict_priority_for_ef():
    sched = CbwfqScheduler(policy(), 4_000_000, random.Random(0))
    for i in range(5):
        sched.enqueue(pkt("AF41", seq=i), "AF41", 0)
        sched.enqueue(pkt("EF", 80, seq=i), "EF", 0)
    order = [sched.dequeue(0).cls for _ in range(10)]
    assert order == ["EF"] * 5 + ["AF41"] * 5


def test_unknown_class_goes_to_default_queue():
    sched = CbwfqScheduler(policy(), 4_000_000, random.Random(0))
    assert sched.enqueue(pkt("BE"), "BE", 0) == "queued"
    assert sched.dequeue(0).cls == "BE"


class Rig:
    """One scheduled 4 Mbps port feeding a recorder."""

    def __init__(self, weights, rate=4_000_000, wred=None, limit=100_000):
        self.sim = Simulator()
        self.departures = []
        link = LinkSpec("a", "b", rate, 0.0, 0)
        self.sched = CbwfqScheduler(policy(weights, wred, limit), rate, random.Random(0))
        self.port = ScheduledPort(self.sim, "a", "b", link, self._arrive, self.sched,
                                  lambda p: p.cls)

    def _arrive(self, p, frm):
        self.departures.append((self.sim.now, p.cls, p.wire_bytes() * 8, p.seq))

    def offer(self, t_ns, cls, payload, seq):
        self.sim.schedule(t_ns, self.port.send, pkt(cls, payload, seq))

    def served(self, cls, t0, t1):
        return sum(b for t, c, b, _ in self.departures if c == cls and t0 < t <= t1)

    def transmitted(self, cls, t, rate=4_000_000):
        """Bits of ``cls`` on the wire by ``t``, counting a partial frame."""
        total = 0.0
        for finish, c, bits, _ in self.departures:
            if c != cls:
                continue
            start = finish - bits * NS_PER_S / rate
            if finish <= t:
                total += bits
            elif start < t:
                total += (t - start) * rate / NS_PER_S
        return total


def test_wfq_two_saturated_classes_share_two_to_one():
    rig = Rig({"AF11": 20, "AF12": 10})
    for i in range(3000):
        rig.offer(0, "AF11", 1472, i)
        rig.offer(0, "AF12", 1472, i)
    rig.sim.run_until(12 * NS_PER_S)
    for start in (0, 1, 2):
        t0, t1 = start * NS_PER_S, (start + 10) * NS_PER_S
        ratio = rig.served("AF11", t0, t1) / rig.served("AF12", t0, t1)
        assert 1.95 <= ratio <= 2.05
    # GPS fluid oracle, one max packet of slack per class
    arrivals = [(0.0, "AF11", 12000)] * 3000 + [(0.0, "AF12", 12000)] * 3000
    ref = gps_service(arrivals, {"AF11": 20, "AF12": 10}, 4e6, [10.0])[0]
    for cls in ("AF11", "AF12"):
        assert abs(rig.transmitted(cls, 10 * NS_PER_S) - ref[cls]) <= 12000


def test_work_conservation_single_backlogged_class_gets_full_link():
    rig = Rig(TABLE5)
    for i in range(4000):
        rig.offer(0, "AF13", 1472, i)
    rig.sim.run_until(10 * NS_PER_S)
    assert rig.served("AF13", -1, 10 * NS_PER_S) == pytest.approx(4e6 * 10, abs=12000)


def test_priority_class_always_first_under_backlog():
    rig = Rig(TABLE5)
    for i in range(200):
        rig.offer(0, "AF41", 1472, i)
    for i in range(50):
        rig.offer(int(0.5 * NS_PER_S), "EF", 80, i)
    rig.sim.run_until(5 * NS_PER_S)
    times = {c: [t for t, cc, _, _ in rig.departures if cc == c] for c in ("EF", "AF41")}
    # once EF arrives, every later AF41 departure waits for the EF backlog
    first_ef = min(times["EF"])
    assert max(times["EF"]) <= first_ef + 3_000_000 + 50 * 200_000
    after = [t for t in times["AF41"] if first_ef < t < max(times["EF"])]
    assert len(after) == 0


sizes = st.lists(st.integers(min_value=64, max_value=1472), min_size=20, max_size=60)


@settings(max_examples=150, deadline=None)
@given(sizes, sizes, st.integers(1, 50), st.integers(1, 50))
def test_wfq_fairness_bound(sizes_i, sizes_j, w_i, w_j):
    rig = Rig({"AF11": w_i, "AF12": w_j})
    for k, s in enumerate(sizes_i):
        rig.offer(0, "AF11", s, k)
    for k, s in enumerate(sizes_j):
        rig.offer(0, "AF12", s, k)
    rig.sim.run_until(60 * NS_PER_S)
    deps = rig.departures
    # both continuously backlogged until the first class runs dry
    last_i = max(t for t, c, _, _ in deps if c == "AF11")
    last_j = max(t for t, c, _, _ in deps if c == "AF12")
    end = min(last_i, last_j)
    lmax = (1472 + 28) * 8
    bound = lmax * (1 / w_i + 1 / w_j)
    epochs = [0] + [t for t, *_ in deps if t <= end]
    cum = {"AF11": [0], "AF12": [0]}
    acc = {"AF11": 0, "AF12": 0}
    for t, c, b, _ in deps:
        if t > end:
            break
        acc[c] += b
        cum["AF11"].append(acc["AF11"])
        cum["AF12"].append(acc["AF12"])
    n = len(epochs)
    for a in range(n):
        for b in range(a + 1, n):
            di = cum["AF11"][b] - cum["AF11"][a]
            dj = cum["AF12"][b] - cum["AF12"][a]
            assert abs(di / w_i - dj / w_j) <= bound + 1e-6


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["AF11", "AF12", "AF41", "EF"]),
                          st.integers(64, 1472), st.integers(0, 200_000_000)),
                min_size=1, max_size=80))
def test_per_class_fifo_and_work_conservation(offers):
    rig = Rig(TABLE5)
    for k, (cls, size, t) in enumerate(offers):
        rig.offer(t, cls, size, k)
    rig.sim.run_until(100 * NS_PER_S)
    assert len(rig.departures) == len(offers)
    for cls in {c for c, _, _ in offers}:
        seqs = [s for _, c, _, s in rig.departures if c == cls]
        queued_order = sorted(seqs, key=lambda k: (offers[k][2], k))
        assert seqs == queued_order
    # link never idles while a packet is waiting
    arrivals = sorted(t for _, _, t in offers)
    done = 0
    prev_finish = 0
    for t, cls, bits, seq in sorted(rig.departures):
        start = t - round(bits * NS_PER_S / 4_000_000)
        if start > prev_finish:
            # after an idle gap every earlier arrival has already been served
            assert sum(1 for a in arrivals if a < start) == done
        prev_finish = t
        done += 1
