"""Static E-LSP label switching: label tables, LER ingress mapping, LSR
forwarding with EXP-derived scheduling class, and trunk metering."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .netmodel import DSCP, DSCP_NAMES, Packet, Topology

FIRST_UNRESERVED_LABEL = 16
MAX_LABEL = (1 << 20) - 1


class MplsError(Exception):
    pass


class PathInvalid(MplsError):
    pass


class NoBinding(MplsError):
    pass


class NoLabelEntry(MplsError):
    pass


@dataclass
class FecRule:
    name: str
    match_dscp: str
    match_in_interface: Optional[str] = None

    def matches(self, dscp: int, in_interface: Optional[str]) -> bool:
        if DSCP[self.match_dscp] != dscp:
            return False
        return self.match_in_interface is None or self.match_in_interface == in_interface


@dataclass
class TrunkProfile:
    name: str
    max_bit_rate: float
    peak_burst: float
    avg_bit_rate: float
    max_burst: float
    traffic_class: str
    out_of_profile_action: str = "transmit"
    remark: str = "unchanged"

    def __post_init__(self) -> None:
        if self.out_of_profile_action != "transmit":
            raise MplsError(f"trunk {self.name}: only 'transmit' out-of-profile action is modeled")
        for v in (self.max_bit_rate, self.peak_burst, self.avg_bit_rate, self.max_burst):
            if v <= 0:
                raise MplsError(f"trunk {self.name}: rates and bursts must be positive")


@dataclass
class Lsp:
    name: str
    hops: list[str]
    bidirectional: bool = True
    kind: str = "static-e-lsp"

    @property
    def head(self) -> str:
        return self.hops[0]

    @property
    def tail(self) -> str:
        return self.hops[-1]


@dataclass
class TeBinding:
    node: str
    in_interface: Optional[str]
    fec: str
    dscp: str
    trunk: str
    lsp: str


class ExpPhbMap:
    """Bijection between PHB names and the 3-bit EXP field."""

    DEFAULT = {"BE": 0, "AF11": 1, "AF12": 2, "AF13": 3, "AF41": 4, "AF42": 5, "AF43": 6, "EF": 7}

    def __init__(self, mapping: Optional[dict[str, int]] = None) -> None:
        mapping = dict(self.DEFAULT if mapping is None else mapping)
        if len(set(mapping.values())) != len(mapping):
            raise MplsError("EXP<->PHB map is not one-to-one")
        for phb, exp in mapping.items():
            if phb not in DSCP:
                raise MplsError(f"unknown PHB {phb!r} in EXP map")
            if not 0 <= exp <= 7:
                raise MplsError(f"EXP value {exp} out of range")
        self.to_exp = mapping
        self.to_phb = {v: k for k, v in mapping.items()}

    def exp_for_dscp(self, dscp: int) -> int:
        return self.to_exp[DSCP_NAMES[dscp]]

    def phb_for_exp(self, exp: int) -> str:
        return self.to_phb[exp]


@dataclass
class IlmEntry:
    """Incoming-label entry: swap to ``out_label`` toward ``next_hop``, or pop."""

    op: str  # "swap" | "pop"
    out_label: Optional[int]
    next_hop: Optional[str]
    lsp: str


@dataclass
class LabelTable:
    node: str
    ftn: dict[str, tuple[int, str]] = field(default_factory=dict)  # lsp -> (label, next hop)
    ilm: dict[int, IlmEntry] = field(default_factory=dict)
    _next_label: int = FIRST_UNRESERVED_LABEL

    def allocate(self) -> int:
        label = self._next_label
        if label > MAX_LABEL:
            raise MplsError(f"{self.node}: label space exhausted")
        self._next_label += 1
        return label


def _directions(lsp: Lsp) -> list[tuple[str, list[str]]]:
    out = [(lsp.name, list(lsp.hops))]
    if lsp.bidirectional:
        out.append((f"{lsp.name}:reverse", list(reversed(lsp.hops))))
    return out


def build_label_tables(lsps: list[Lsp], topology: Topology) -> dict[str, LabelTable]:
    """Provision static LSPs hop by hop.

    Each node hands out its own incoming labels (downstream allocation). The
    head-end pushes, transit nodes swap and the tail end pops.
    """
    tables: dict[str, LabelTable] = {}

    def table(node: str) -> LabelTable:
        if node not in tables:
            tables[node] = LabelTable(node)
        return tables[node]

    for lsp in lsps:
        if len(lsp.hops) < 2:
            raise PathInvalid(f"{lsp.name}: needs at least two hops")
        if len(set(lsp.hops)) != len(lsp.hops):
            raise PathInvalid(f"{lsp.name}: hop list revisits a node")
        for a, b in zip(lsp.hops, lsp.hops[1:]):
            if topology.link_between(a, b) is None:
                raise PathInvalid(f"{lsp.name}: {a} and {b} are not adjacent")
        for end in (lsp.head, lsp.tail):
            node = topology.nodes.get(end)
            if node is None or node.kind != "ler":
                raise PathInvalid(f"{lsp.name}: {end} is not an LER")
        for name, hops in _directions(lsp):
            # walk from the tail so each upstream hop learns its outgoing label
            downstream_label = None
            for i in range(len(hops) - 1, 0, -1):
                node = hops[i]
                in_label = table(node).allocate()
                if i == len(hops) - 1:
                    entry = IlmEntry("pop", None, None, name)
                else:
                    entry = IlmEntry("swap", downstream_label, hops[i + 1], name)
                table(node).ilm[in_label] = entry
                downstream_label = in_label
            table(hops[0]).ftn[name] = (downstream_label, hops[1])
    return tables


class TrunkMeter:
    """Two token buckets: committed (average rate, max burst) and peak (max
    rate, peak burst). Only in-profile packets consume tokens."""

    def __init__(self, profile: TrunkProfile) -> None:
        self.profile = profile
        self.committed = float(profile.max_burst)
        self.peak = float(profile.peak_burst)
        self.last = 0
        self.in_profile = 0
        self.out_of_profile = 0
        self.in_bits = 0
        self.out_bits = 0

    def meter(self, bits: int, now_ns: int) -> str:
        p = self.profile
        dt = (now_ns - self.last) / 1e9
        self.last = now_ns
        if dt > 0:
            self.committed = min(p.max_burst, self.committed + dt * p.avg_bit_rate)
            self.peak = min(p.peak_burst, self.peak + dt * p.max_bit_rate)
        if bits <= self.committed and bits <= self.peak:
            self.committed -= bits
            self.peak -= bits
            self.in_profile += 1
            self.in_bits += bits
            return "in_profile"
        self.out_of_profile += 1
        self.out_bits += bits
        return "out_of_profile"


def trunk_meter(packet: Packet, meter: TrunkMeter, now_ns: int) -> str:
    return meter.meter(packet.wire_bytes() * 8, now_ns)


class TeConfig:
    """FEC, trunk and LSP provisioning for one MPLS domain."""

    def __init__(self, lsps: list[Lsp], trunks: list[TrunkProfile],
                 bindings: list[TeBinding], exp_map: Optional[ExpPhbMap] = None) -> None:
        self.lsps = {l.name: l for l in lsps}
        self.trunks = {t.name: t for t in trunks}
        self.bindings = list(bindings)
        self.exp_map = exp_map or ExpPhbMap()
        self.fecs = [FecRule(b.fec, b.dscp, b.in_interface) for b in bindings]
        for b in self.bindings:
            if b.lsp not in self.lsps:
                raise MplsError(f"binding {b.fec!r} references undefined LSP {b.lsp!r}")
            if b.trunk not in self.trunks:
                raise MplsError(f"binding {b.fec!r} references undefined trunk {b.trunk!r}")
            if b.dscp not in DSCP:
                raise MplsError(f"binding {b.fec!r}: unknown DSCP {b.dscp!r}")
            if self.lsps[b.lsp].head != b.node:
                raise MplsError(f"binding {b.fec!r}: LSP {b.lsp} does not start at {b.node}")
        seen = set()
        for b in self.bindings:
            key = (b.node, b.in_interface, b.dscp)
            if key in seen:
                raise MplsError(f"two FECs match {key}")
            seen.add(key)

    def binding_for(self, node: str, in_interface: Optional[str], dscp: int) -> TeBinding:
        for b in self.bindings:
            if b.node != node:
                continue
            if b.in_interface is not None and b.in_interface != in_interface:
                continue
            if DSCP[b.dscp] == dscp:
                return b
        raise NoBinding(f"{node}: no TE binding for DSCP {DSCP_NAMES.get(dscp, dscp)}")


def ingress_map(packet: Packet, node: str, in_interface: Optional[str], te: TeConfig,
                tables: dict[str, LabelTable], meters: dict[str, TrunkMeter],
                now_ns: int) -> tuple[str, TeBinding]:
    """Push the bound LSP's label at the head-end; return (next hop, binding)."""
    binding = te.binding_for(node, in_interface, packet.dscp)
    label, next_hop = tables[node].ftn[binding.lsp]
    exp = te.exp_map.exp_for_dscp(packet.dscp)
    meter = meters.get(binding.trunk)
    if meter is not None:
        # out-of-profile traffic is transmitted unchanged; only counted
        trunk_meter(packet, meter, now_ns)
    bottom = 0 if packet.label_stack else 1
    packet.label_stack.append([label, exp, bottom, packet.ttl])
    return next_hop, binding


def core_forward(packet: Packet, table: LabelTable, exp_map: ExpPhbMap) -> tuple[Optional[str], str]:
    """Swap or pop the top label.

    Returns (next hop or None when popped here, scheduling PHB). The PHB comes
    from the EXP bits, not the inner IP header.
    """
    if not packet.label_stack:
        raise NoLabelEntry(f"{table.node}: unlabeled packet")
    top = packet.label_stack[-1]
    entry = table.ilm.get(top[0])
    if entry is None:
        raise NoLabelEntry(f"{table.node}: no entry for label {top[0]}")
    phb = exp_map.phb_for_exp(top[1])
    if entry.op == "pop":
        packet.label_stack.pop()
        return None, phb
    top[0] = entry.out_label
    top[3] -= 1
    return entry.next_hop, phb
