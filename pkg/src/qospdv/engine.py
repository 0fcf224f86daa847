"""Discrete-event kernel: integer-nanosecond clock, FIFO tie-broken event heap
and per-source random streams."""

from __future__ import annotations

import hashlib
import heapq
import itertools
import random
from typing import Any, Callable, NamedTuple

NS_PER_S = 1_000_000_000


class PastTime(ValueError):
    """Raised when an event is scheduled before the current clock."""


class SimEvent(NamedTuple):
    fire_time: int
    seq: int
    action: Callable[..., Any]
    args: tuple = ()


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


def to_seconds(ns: int) -> float:
    return ns / NS_PER_S


class Simulator:
    """Single-threaded event loop.

    Events with equal ``fire_time`` run in insertion order. Times are integer
    nanoseconds so ordering and replay are exact.
    """

    def __init__(self) -> None:
        self.now = 0
        self._heap: list[tuple] = []
        self._seq = itertools.count()
        self.executed = 0

    def schedule(self, fire_time: int, action: Callable[..., Any], *args: Any) -> int:
        if fire_time < self.now:
            raise PastTime(f"event at {fire_time} ns is before clock {self.now} ns")
        seq = next(self._seq)
        heapq.heappush(self._heap, (fire_time, seq, action, args))
        return seq

    def schedule_event(self, event: SimEvent) -> int:
        return self.schedule(event.fire_time, event.action, *event.args)

    def schedule_in(self, delay: int, action: Callable[..., Any], *args: Any) -> int:
        return self.schedule(self.now + delay, action, *args)

    def pending(self) -> int:
        return len(self._heap)

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def run_until(self, t_end: int) -> int:
        """Execute every event with ``fire_time <= t_end``; return how many ran.

        The clock is left at ``t_end`` afterwards.
        """
        if t_end < self.now:
            raise PastTime(f"run_until({t_end}) is before clock {self.now}")
        heap = self._heap
        pop = heapq.heappop
        count = 0
        while heap and heap[0][0] <= t_end:
            t, _, action, args = pop(heap)
            self.now = t
            action(*args)
            count += 1
        self.now = t_end
        self.executed += count
        return count


def rng_stream(seed: int, stream_id: str) -> random.Random:
    """Independent generator for one source, keyed by (seed, stream_id).

    sha256 is used instead of ``hash()`` so the derivation is stable across
    interpreter runs.
    """
    digest = hashlib.sha256(f"{int(seed)}:{stream_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))
