"""Edge classification and marking, WRED and class-based WFQ with a strict
priority class."""

from __future__ import annotations

import ipaddress
import random
from functools import lru_cache
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .netmodel import DSCP, Packet

DEFAULT_CLASS = "class-default"


class PolicyError(ValueError):
    pass


@dataclass
class AclRule:
    """Extended-ACL entry matching on source address with a Cisco-style
    wildcard mask (set bits are "don't care")."""

    name: str
    source: str
    wildcard: str
    set_dscp: str
    action: str = "permit"

    def __post_init__(self) -> None:
        if self.action != "permit":
            raise PolicyError(f"ACL {self.name}: only 'permit' is supported")
        if self.set_dscp not in DSCP:
            raise PolicyError(f"ACL {self.name}: unknown DSCP {self.set_dscp!r}")
        addr = ipaddress.ip_address(self.source)
        wild = ipaddress.ip_address(self.wildcard)
        if addr.version != wild.version:
            raise PolicyError(f"ACL {self.name}: address/wildcard family mismatch")
        self.version = addr.version
        self._care = ~int(wild) & ((1 << addr.max_prefixlen) - 1)
        self._value = int(addr) & self._care

    def matches(self, address: str) -> bool:
        version, value = _parse(address)
        if version != self.version:
            return False
        return (value & self._care) == self._value


@lru_cache(maxsize=4096)
def _parse(address: str) -> tuple[int, int]:
    ip = ipaddress.ip_address(address)
    return ip.version, int(ip)


def classify_and_mark(packet: Packet, acl: list[AclRule]) -> int:
    """Set ``packet.dscp`` from the first matching rule; unmatched -> BE."""
    dscp = DSCP["BE"]
    for rule in acl:
        if rule.matches(packet.src_addr):
            dscp = DSCP[rule.set_dscp]
            break
    packet.dscp = dscp
    return dscp


@dataclass
class WredProfile:
    exp_weight: int = 9
    min_th: float = 100
    max_th: float = 200
    mark_prob_denominator: int = 10
    match: str = "dscp"

    def __post_init__(self) -> None:
        if not self.min_th < self.max_th:
            raise PolicyError("WRED min_th must be below max_th")
        if self.mark_prob_denominator < 1:
            raise PolicyError("WRED mark probability denominator must be >= 1")
        if self.exp_weight < 0:
            raise PolicyError("WRED exponential weight constant must be >= 0")


def wred_update_avg(avg: float, instantaneous_q: float, n: int) -> float:
    return avg + (instantaneous_q - avg) * 2.0 ** (-n)


def wred_drop_probability(avg: float, profile: WredProfile) -> float:
    if avg < profile.min_th:
        return 0.0
    if avg >= profile.max_th:
        return 1.0
    return (avg - profile.min_th) / (profile.max_th - profile.min_th) / profile.mark_prob_denominator


def wred_drop_decision(avg: float, profile: WredProfile, rng: random.Random) -> str:
    p = wred_drop_probability(avg, profile)
    if p <= 0.0:
        return "enqueue"
    if p >= 1.0:
        return "drop"
    return "drop" if rng.random() < p else "enqueue"


@dataclass
class CbwfqClass:
    name: str
    bandwidth_percent: float
    queue_limit: int = 500
    priority: bool = False
    bandwidth_type: str = "relative"

    def __post_init__(self) -> None:
        if self.bandwidth_percent <= 0:
            raise PolicyError(f"class {self.name}: bandwidth must be > 0")
        if self.queue_limit < 1:
            raise PolicyError(f"class {self.name}: queue limit must be >= 1")
        if self.bandwidth_type != "relative":
            raise PolicyError(f"class {self.name}: only relative bandwidth is modeled")


@dataclass
class PolicyEntry:
    cls: CbwfqClass
    wred: Optional[WredProfile] = None


@dataclass
class TrafficPolicy:
    name: str
    entries: list[PolicyEntry] = field(default_factory=list)
    attachments: list[str] = field(default_factory=list)  # "NODE->PEER", outbound

    def __post_init__(self) -> None:
        names = [e.cls.name for e in self.entries]
        if len(set(names)) != len(names):
            raise PolicyError(f"policy {self.name}: class referenced more than once")
        if sum(e.cls.bandwidth_percent for e in self.entries) > 100 + 1e-9:
            raise PolicyError(f"policy {self.name}: bandwidth exceeds 100%")

    def class_names(self) -> list[str]:
        return [e.cls.name for e in self.entries]


class _ClassState:
    __slots__ = ("name", "weight", "limit", "priority", "wred", "queue", "avg",
                 "last_finish", "served_bytes", "drops_wred", "drops_tail", "order")

    def __init__(self, name, weight, limit, priority, wred, order):
        self.name = name
        self.weight = weight
        self.limit = limit
        self.priority = priority
        self.wred = wred
        self.queue: deque = deque()
        self.avg = 0.0
        self.last_finish = 0.0
        self.served_bytes = 0
        self.drops_wred = 0
        self.drops_tail = 0
        self.order = order


class CbwfqScheduler:
    """CBWFQ: priority classes first, the rest by WFQ finish tags.

    Virtual time is self-clocked: it is the finish tag of the last WFQ packet
    sent, so a newly active class starts level with whoever is being served
    and idle classes' share goes to the backlogged ones. Tags are in framed
    bits (``l2_overhead`` included) per unit weight. Unlike a GPS-tracking
    clock this needs no notion of the capacity left over by the priority
    class, and it keeps any two backlogged classes within one maximum packet
    per unit weight of each other.
    """

    def __init__(self, policy: TrafficPolicy, rate_bps: int, rng: random.Random,
                 default_weight: float = 1.0, default_limit: int = 500,
                 l2_overhead: int = 0) -> None:
        self.rate = float(rate_bps)
        self.l2 = l2_overhead
        self.rng = rng
        self.classes: dict[str, _ClassState] = {}
        for i, entry in enumerate(policy.entries):
            c = entry.cls
            self.classes[c.name] = _ClassState(
                c.name, float(c.bandwidth_percent), c.queue_limit, c.priority, entry.wred, i)
        if DEFAULT_CLASS not in self.classes:
            self.classes[DEFAULT_CLASS] = _ClassState(
                DEFAULT_CLASS, default_weight, default_limit, False, None, len(self.classes))
        self._priority = [s for s in self.classes.values() if s.priority]
        self._wfq = [s for s in self.classes.values() if not s.priority]
        self.vtime = 0.0
        self._queued = 0

    def backlog(self) -> int:
        return self._queued

    def class_state(self, name: str) -> _ClassState:
        return self.classes[name]

    def enqueue(self, pkt: Packet, cls: str, now: int) -> str:
        state = self.classes.get(cls)
        if state is None:
            state = self.classes[DEFAULT_CLASS]
        if state.wred is not None:
            prof = state.wred
            state.avg = wred_update_avg(state.avg, len(state.queue), prof.exp_weight)
            if wred_drop_decision(state.avg, prof, self.rng) == "drop":
                state.drops_wred += 1
                return "dropped_wred"
        if len(state.queue) >= state.limit:
            state.drops_tail += 1
            return "dropped_tail"
        bits = (pkt.wire_bytes() + self.l2) * 8
        if state.priority:
            state.queue.append((0.0, pkt))
        else:
            start = self.vtime if self.vtime > state.last_finish else state.last_finish
            finish = start + bits / state.weight
            state.last_finish = finish
            state.queue.append((finish, pkt))
        self._queued += 1
        return "queued"

    def finish_tag_of_tail(self, cls: str) -> float:
        return self.classes[cls].queue[-1][0]

    def dequeue(self, now: int) -> Optional[Packet]:
        for state in self._priority:
            if state.queue:
                _, pkt = state.queue.popleft()
                state.served_bytes += pkt.wire_bytes()
                self._queued -= 1
                return pkt
        best = None
        best_tag = 0.0
        for state in self._wfq:
            if state.queue:
                tag = state.queue[0][0]
                if best is None or tag < best_tag:
                    best = state
                    best_tag = tag
        if best is None:
            return None
        tag, pkt = best.queue.popleft()
        self.vtime = tag
        best.served_bytes += pkt.wire_bytes()
        self._queued -= 1
        return pkt


class FifoScheduler:
    """Single drop-tail queue, usable wherever a scheduler is expected."""

    def __init__(self, limit: int = 500) -> None:
        self.limit = limit
        self.queue: deque = deque()

    def backlog(self) -> int:
        return len(self.queue)

    def enqueue(self, pkt: Packet, cls: str, now: int) -> str:
        if len(self.queue) >= self.limit:
            return "dropped_tail"
        self.queue.append(pkt)
        return "queued"

    def dequeue(self, now: int) -> Optional[Packet]:
        return self.queue.popleft() if self.queue else None
