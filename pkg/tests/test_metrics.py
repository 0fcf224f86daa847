import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qospdv.metrics import (DEFAULT_PDV_MODE, Empty, TooFewSamples, UtilizationStats,
                            igp_analysis, ipdv_series, link_utilization, summarize)
from qospdv.netmodel import LinkTrace


# brute-force references, pure Python

def ref_ipdv(delays, signed=False):
    out = []
    for a, b in zip(delays, delays[1:]):
        out.append(b - a if signed else abs(b - a))
    return out


def ref_summary(xs):
    n = len(xs)
    mean = math.fsum(xs) / n
    var = math.fsum((x - mean) ** 2 for x in xs) / n
    return min(xs), mean, max(xs), math.sqrt(var)


def ref_running_variance(xs):
    # Welford
    out = []
    mean = m2 = 0.0
    for k, x in enumerate(xs, 1):
        delta = x - mean
        mean += delta / k
        m2 += delta * (x - mean)
        out.append(m2 / k)
    return out[1:]


def test_default_mode():
    assert DEFAULT_PDV_MODE == "consecutive-absolute"


def test_constant_delay_has_zero_ipdv():
    assert list(ipdv_series([0.010, 0.010, 0.010])) == [0.0, 0.0]
    assert list(ipdv_series([0.010, 0.010, 0.010], "variance")) == [0.0, 0.0]


def test_hand_example():
    assert ipdv_series([0.010, 0.020, 0.015]) == pytest.approx([0.010, 0.005])
    assert ipdv_series([0.010, 0.020, 0.015], "consecutive-signed") == pytest.approx([0.010, -0.005])


def test_single_sample_rejected():
    with pytest.raises(TooFewSamples):
        ipdv_series([0.01])
    with pytest.raises(ValueError):
        ipdv_series([0.01, 0.02], "median")


def test_summary_examples():
    assert tuple(summarize([0.0, 0.0, 0.0])) == (0.0, 0.0, 0.0, 0.0)
    s = summarize([0.010, 0.005])
    assert tuple(s) == pytest.approx((5e-3, 7.5e-3, 1e-2, 2.5e-3))
    with pytest.raises(Empty):
        summarize([])


def test_uniform_monte_carlo():
    rng = np.random.default_rng(11)
    s = summarize(rng.uniform(0, 1, 10_000))
    assert abs(s.avg - 0.5) <= 0.02
    assert abs(s.stddev - 1 / math.sqrt(12)) <= 0.02


@pytest.fixture(scope="module")
def big_series():
    rng = random.Random(99)
    return [0.02 + rng.expovariate(50.0) for _ in range(1_000_000)]


def test_ipdv_matches_brute_force_on_million_samples(big_series):
    for signed, mode in ((False, "consecutive-absolute"), (True, "consecutive-signed")):
        got = ipdv_series(big_series, mode)
        ref = ref_ipdv(big_series, signed)
        assert len(got) == len(ref)
        # elementwise differences of doubles are exact in both
        assert np.array_equal(got, np.asarray(ref))


def test_summarize_matches_brute_force_on_million_samples(big_series):
    series = ref_ipdv(big_series)
    got = summarize(np.asarray(series))
    ref = ref_summary(series)
    for g, r in zip(got, ref):
        assert g == pytest.approx(r, rel=1e-12)


def test_running_variance_matches_welford():
    rng = random.Random(5)
    xs = [0.05 + rng.gauss(0, 0.01) for _ in range(20_000)]
    got = ipdv_series(xs, "variance")
    ref = ref_running_variance(xs)
    assert np.allclose(got, ref, rtol=1e-9, atol=1e-18)
    assert got[-1] == pytest.approx(ref_summary(xs)[3] ** 2, rel=1e-12)


delays = st.lists(st.floats(0.0, 10.0, allow_nan=False), min_size=2, max_size=200)


@settings(max_examples=200)
@given(delays, st.floats(-5.0, 5.0))
def test_time_shift_invariance(d, c):
    base = ipdv_series(d, "consecutive-signed")
    shifted = ipdv_series([x + c for x in d], "consecutive-signed")
    assert np.allclose(base, shifted, atol=1e-12)
    v0 = ipdv_series(d, "variance")
    v1 = ipdv_series([x + c for x in d], "variance")
    assert np.allclose(v0, v1, rtol=1e-6, atol=1e-9)


@settings(max_examples=200)
@given(delays)
def test_absolute_is_abs_of_signed(d):
    assert np.array_equal(np.abs(ipdv_series(d, "consecutive-signed")),
                          ipdv_series(d, "consecutive-absolute"))


@settings(max_examples=200)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=300))
def test_summary_bounds(xs):
    s = summarize(xs)
    assert s.min <= s.avg + 1e-9 and s.avg <= s.max + 1e-9
    assert s.stddev >= 0
    assert s.stddev <= (s.max - s.min) / 2 + 1e-9


@settings(max_examples=50)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=50), st.floats(0.0, 0.5))
def test_constant_owd_flow_is_exactly_zero(_, c):
    assert not ipdv_series([c] * 10).any()


# ------------------------------------------------------------ utilization

def test_idle_link():
    u = link_utilization(LinkTrace(4_000_000), (0.0, 10.0))
    assert u.busy_fraction == 0.0


def test_back_to_back_frames_fill_the_link():
    trace = LinkTrace(4_000_000)
    ser = 3_000_000
    for i in range(10_000):
        trace.record(i * ser, ser, 12_000)
    assert link_utilization(trace, (0.0, 30.0)).busy_fraction == pytest.approx(1.0)


def test_voice_rate_frames():
    trace = LinkTrace(4_000_000)
    ser = 127 * 8 * 10**9 // 4_000_000
    for i in range(1000):
        trace.record(i * 10_000_000, ser, 127 * 8)
    u = link_utilization(trace, (0.0, 10.0))
    assert u.busy_fraction == pytest.approx(100 * 127 * 8 / 4e6)
    assert u.busy_fraction == pytest.approx(0.0254)


def test_igp_verdicts():
    stats = [UtilizationStats("l", d, f, 0, (0, 1))
             for d, f in [("a", 0.97), ("b", 0.0), ("c", 0.5), ("d", 0.95), ("e", 0.05)]]
    verdicts = [v for _, v in igp_analysis(stats)]
    assert verdicts == ["over-utilized", "under-utilized", "normal", "over-utilized",
                        "under-utilized"]
    idle = [UtilizationStats("l", "x", 0.0, 0, (0, 1))] * 3
    assert {v for _, v in igp_analysis(idle)} == {"under-utilized"}
