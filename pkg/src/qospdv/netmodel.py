"""Topology description, packet representation and link transmission."""

from __future__ import annotations

import ipaddress
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine import NS_PER_S, Simulator

IPV4_HEADER = 20
IPV6_HEADER = 40
UDP_HEADER = 8
RTP_HEADER = 12
MPLS_SHIM = 4

PPP_L2_OVERHEAD = 7
ETHERNET_L2_OVERHEAD = 18

NODE_KINDS = ("workstation", "switch", "ler", "lsr")

# IPv6 Traffic Class carries the same six-bit codepoints in its upper bits.
DSCP = {
    "BE": 0,
    "AF11": 10,
    "AF12": 12,
    "AF13": 14,
    "AF41": 34,
    "AF42": 36,
    "AF43": 38,
    "EF": 46,
}
DSCP_NAMES = {v: k for k, v in DSCP.items()}


class TopologyError(ValueError):
    pass


def header_overhead(ip_version: int, label_depth: int = 0, transport: str = "udp") -> int:
    """Bytes of L3 and above that each packet carries on top of its payload."""
    if label_depth < 0:
        raise ValueError("label_depth must be >= 0")
    if ip_version == 4:
        size = IPV4_HEADER
    elif ip_version == 6:
        size = IPV6_HEADER
    else:
        raise ValueError(f"unknown IP version {ip_version!r}")
    size += UDP_HEADER
    if transport in ("rtp", "rtp-over-udp"):
        size += RTP_HEADER
    elif transport != "udp":
        raise ValueError(f"unknown transport {transport!r}")
    return size + MPLS_SHIM * label_depth


def serialization_delay(frame_bytes: int, rate_bps: float) -> float:
    if rate_bps <= 0:
        raise ValueError("rate_bps must be positive")
    return frame_bytes * 8 / rate_bps


def serialization_ns(frame_bytes: int, rate_bps: int) -> int:
    # integer rounding keeps the clock exact for the usual 4/10/100 Mbps rates
    return (frame_bytes * 8 * NS_PER_S + rate_bps // 2) // rate_bps


def segment(app_message_bytes: int, max_segment: int = 1500) -> list[int]:
    if max_segment <= 0:
        raise ValueError("max_segment must be positive")
    full, rest = divmod(app_message_bytes, max_segment)
    sizes = [max_segment] * full
    if rest:
        sizes.append(rest)
    return sizes


@dataclass
class NodeSpec:
    id: str
    kind: str
    ipv4: Optional[str] = None
    ipv6: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in NODE_KINDS:
            raise TopologyError(f"node {self.id}: unknown kind {self.kind!r}")
        if self.ipv4 is not None:
            ipaddress.IPv4Address(self.ipv4)
        if self.ipv6 is not None:
            ipaddress.IPv6Address(self.ipv6)

    @property
    def is_router(self) -> bool:
        return self.kind in ("ler", "lsr")

    def address(self, ip_version: int) -> str:
        addr = self.ipv4 if ip_version == 4 else self.ipv6
        if addr is None:
            raise TopologyError(f"node {self.id} has no IPv{ip_version} address")
        return addr


@dataclass
class LinkSpec:
    a: str
    b: str
    rate: int
    prop_delay: float = 0.0
    l2_overhead: int = PPP_L2_OVERHEAD
    cost: float = 1.0

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise TopologyError(f"link {self.name}: rate must be > 0")
        if self.prop_delay < 0 or self.l2_overhead < 0:
            raise TopologyError(f"link {self.name}: negative delay or overhead")
        if self.cost <= 0:
            raise TopologyError(f"link {self.name}: cost must be > 0")
        if self.a == self.b:
            raise TopologyError(f"link {self.name}: self loop")

    @property
    def name(self) -> str:
        return f"{self.a}-{self.b}"

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a


@dataclass
class Topology:
    nodes: dict[str, NodeSpec] = field(default_factory=dict)
    links: list[LinkSpec] = field(default_factory=list)

    def add_node(self, node: NodeSpec) -> None:
        if node.id in self.nodes:
            raise TopologyError(f"duplicate node {node.id}")
        self.nodes[node.id] = node

    def add_link(self, link: LinkSpec) -> None:
        for end in (link.a, link.b):
            if end not in self.nodes:
                raise TopologyError(f"link {link.name} references unknown node {end}")
        if self.link_between(link.a, link.b) is not None:
            raise TopologyError(f"duplicate link {link.name}")
        self.links.append(link)

    def link_between(self, a: str, b: str) -> Optional[LinkSpec]:
        for link in self.links:
            if {link.a, link.b} == {a, b}:
                return link
        return None

    def neighbors(self, node: str) -> list[str]:
        return sorted(l.other(node) for l in self.links if node in (l.a, l.b))

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        start = next(iter(self.nodes))
        seen = {start}
        todo = [start]
        while todo:
            n = todo.pop()
            for m in self.neighbors(n):
                if m not in seen:
                    seen.add(m)
                    todo.append(m)
        return len(seen) == len(self.nodes)

    def node_by_address(self, address: str) -> str:
        ip = ipaddress.ip_address(address)
        for node in self.nodes.values():
            for a in (node.ipv4, node.ipv6):
                if a is not None and ipaddress.ip_address(a) == ip:
                    return node.id
        raise TopologyError(f"no node owns address {address}")


class Packet:
    """One IP datagram in flight."""

    __slots__ = (
        "flow", "cls", "src", "dst", "src_addr", "seq", "dscp", "ip_version",
        "payload", "transport", "l3_bytes", "label_stack", "created_at",
        "hops", "ttl",
    )

    def __init__(self, flow, cls, src, dst, src_addr, seq, ip_version, payload,
                 transport, created_at, dscp=0):
        self.flow = flow
        self.cls = cls
        self.src = src
        self.dst = dst
        self.src_addr = src_addr
        self.seq = seq
        self.dscp = dscp
        self.ip_version = ip_version
        self.payload = payload
        self.transport = transport
        self.l3_bytes = payload + header_overhead(ip_version, 0, transport)
        # entries are [label, exp, bottom_of_stack, ttl]
        self.label_stack: list[list[int]] = []
        self.created_at = created_at
        self.hops: list[tuple[str, int]] = []
        self.ttl = 64

    @property
    def traffic_class(self) -> int:
        return self.dscp << 2

    def wire_bytes(self) -> int:
        """IP packet size including any MPLS shims, excluding L2 framing."""
        return self.l3_bytes + MPLS_SHIM * len(self.label_stack)

    def __repr__(self) -> str:
        return f"Packet({self.flow}#{self.seq}, dscp={self.dscp}, {self.payload}B)"


class LinkTrace:
    """Per-direction departure accounting binned in time for windowed utilization."""

    def __init__(self, rate: int, bin_ns: int = NS_PER_S // 10) -> None:
        self.rate = rate
        self.bin_ns = bin_ns
        self.busy = [0]
        self.bits = [0]
        self.frames = 0
        self.total_bits = 0

    def record(self, start: int, ser: int, bits: int) -> None:
        idx = start // self.bin_ns
        busy = self.busy
        if idx >= len(busy):
            grow = idx + 1 - len(busy)
            busy.extend([0] * grow)
            self.bits.extend([0] * grow)
        busy[idx] += ser
        self.bits[idx] += bits
        self.frames += 1
        self.total_bits += bits

    def window(self, t0: int, t1: int) -> tuple[int, int]:
        """Busy ns and bits of frames whose transmission starts in [t0, t1).

        Window edges are resolved to the bin width.
        """
        i0 = t0 // self.bin_ns
        i1 = min(-(-t1 // self.bin_ns), len(self.busy))
        return sum(self.busy[i0:i1]), sum(self.bits[i0:i1])


class Port:
    """Output side of one link direction."""

    def __init__(self, sim: Simulator, owner: str, peer: str, link: LinkSpec,
                 deliver: Callable[[Packet, str], None]) -> None:
        self.sim = sim
        self.owner = owner
        self.peer = peer
        self.link = link
        self.rate = link.rate
        self.prop_ns = int(round(link.prop_delay * NS_PER_S))
        self.l2 = link.l2_overhead
        self.deliver = deliver
        self.trace = LinkTrace(link.rate)
        self.busy_until = 0
        self.in_transit = 0
        self.drops: dict[str, int] = {}

    @property
    def name(self) -> str:
        return f"{self.owner}->{self.peer}"

    def _drop(self, pkt: Packet, reason: str, on_drop) -> None:
        self.drops[reason] = self.drops.get(reason, 0) + 1
        if on_drop is not None:
            on_drop(pkt, reason)

    def transmit(self, pkt: Packet, depart: int) -> int:
        """Put one frame on the wire no earlier than ``depart``; return arrival time.

        Frames on a port never overlap, so arrivals keep departure order.
        """
        arrival = self._occupy(pkt, depart) + self.prop_ns
        self.sim.schedule(arrival, self._arrive, pkt)
        return arrival

    def _occupy(self, pkt: Packet, depart: int) -> int:
        start = depart if depart > self.busy_until else self.busy_until
        frame = pkt.wire_bytes() + self.l2
        ser = (frame * 8 * NS_PER_S + self.rate // 2) // self.rate
        finish = start + ser
        self.busy_until = finish
        self.trace.record(start, ser, frame * 8)
        self.in_transit += 1
        return finish

    def _arrive(self, pkt: Packet) -> None:
        self.in_transit -= 1
        self.deliver(pkt, self.owner)


class FifoPort(Port):
    """Drop-tail FIFO with a packet-count limit."""

    def __init__(self, sim, owner, peer, link, deliver, limit: int = 500, on_drop=None):
        super().__init__(sim, owner, peer, link, deliver)
        self.limit = limit
        self.on_drop = on_drop
        self._finishes: deque[int] = deque()

    def backlog(self) -> int:
        now = self.sim.now
        q = self._finishes
        while q and q[0] <= now:
            q.popleft()
        return len(q)

    def send(self, pkt: Packet) -> bool:
        if self.backlog() >= self.limit:
            self._drop(pkt, "tail", self.on_drop)
            return False
        self.transmit(pkt, self.sim.now)
        self._finishes.append(self.busy_until)
        return True


class ScheduledPort(Port):
    """Port whose departures are chosen by a queueing discipline.

    ``scheduler`` must provide ``enqueue(pkt, cls, now) -> str`` and
    ``dequeue(now) -> Packet | None``; ``classify(pkt)`` names the queue.
    """

    def __init__(self, sim, owner, peer, link, deliver, scheduler, classify, on_drop=None):
        super().__init__(sim, owner, peer, link, deliver)
        self.scheduler = scheduler
        self.classify = classify
        self.on_drop = on_drop
        self._busy = False
        self._in_service = 0

    def backlog(self) -> int:
        return self.scheduler.backlog() + self._in_service

    def send(self, pkt: Packet) -> bool:
        verdict = self.scheduler.enqueue(pkt, self.classify(pkt), self.sim.now)
        if verdict != "queued":
            self._drop(pkt, verdict, self.on_drop)
            return False
        if not self._busy:
            self._start()
        return True

    def _start(self) -> None:
        pkt = self.scheduler.dequeue(self.sim.now)
        if pkt is None:
            self._busy = False
            return
        self._busy = True
        self._in_service = 1
        if self.prop_ns:
            self.transmit(pkt, self.sim.now)
            self.sim.schedule(self.busy_until, self._done)
        else:
            # arrival and end of service coincide: one event does both, in
            # the same order two adjacent events would
            self.sim.schedule(self._occupy(pkt, self.sim.now), self._arrive_and_done, pkt)

    def _done(self) -> None:
        self._in_service = 0
        self._start()

    def _arrive_and_done(self, pkt: Packet) -> None:
        self._arrive(pkt)
        self._done()
