import pytest
from hypothesis import given, strategies as st

from qospdv.engine import NS_PER_S, PastTime, SimEvent, Simulator, rng_stream


def test_equal_time_events_run_in_insertion_order():
    sim = Simulator()
    seen = []
    sim.schedule(5 * NS_PER_S, seen.append, "A")
    sim.schedule(5 * NS_PER_S, seen.append, "B")
    sim.run_until(10 * NS_PER_S)
    assert seen == ["A", "B"]


def test_event_at_current_clock_runs_before_advancing():
    sim = Simulator()
    seen = []

    def first():
        sim.schedule(sim.now, seen.append, ("now", sim.now))
        sim.schedule(sim.now + 1, seen.append, ("later", sim.now + 1))

    sim.schedule(100, first)
    sim.run_until(100)
    assert seen == [("now", 100)]
    sim.run_until(200)
    assert seen[-1] == ("later", 101)


def test_past_time_rejected():
    sim = Simulator()
    sim.run_until(NS_PER_S)
    with pytest.raises(PastTime):
        sim.schedule(NS_PER_S - 1, lambda: None)


def test_schedule_event_tuple():
    sim = Simulator()
    out = []
    sim.schedule_event(SimEvent(3, 0, out.append, ("x",)))
    assert sim.run_until(3) == 1
    assert out == ["x"]


def test_empty_queue_run_until():
    sim = Simulator()
    assert sim.run_until(1800 * NS_PER_S) == 0
    assert sim.now == 1800 * NS_PER_S


def test_run_until_partial():
    sim = Simulator()
    for t in (1, 2, 3):
        sim.schedule(t * NS_PER_S, lambda: None)
    assert sim.run_until(int(2.5 * NS_PER_S)) == 2
    assert sim.now == int(2.5 * NS_PER_S)
    assert sim.pending() == 1


@given(st.lists(st.integers(min_value=0, max_value=10**6), min_size=1, max_size=200))
def test_clock_never_decreases(times):
    sim = Simulator()
    seen = []
    for t in times:
        sim.schedule(t, lambda: seen.append(sim.now))
    sim.run_until(10**6)
    assert seen == sorted(seen)
    assert len(seen) == len(times)


def test_rng_streams_are_reproducible_and_independent():
    a1 = [rng_stream(42, "voice:1").random() for _ in range(1)]
    a2 = [rng_stream(42, "voice:1").random() for _ in range(1)]
    assert a1 == a2
    r1, r2 = rng_stream(42, "voice:1"), rng_stream(42, "voice:2")
    assert [r1.random() for _ in range(5)] != [r2.random() for _ in range(5)]
    assert rng_stream(43, "voice:1").random() != rng_stream(42, "voice:1").random()
