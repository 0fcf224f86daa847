"""Wire a :class:`ScenarioSpec` into a running network and collect a report."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .diffserv import CbwfqScheduler, classify_and_mark
from .engine import NS_PER_S, Simulator, rng_stream, to_ns
from .metrics import PDV_MODES, PdvSummary, UtilizationStats, igp_analysis, ipdv_series, link_utilization, summarize
from .mpls import NoBinding, NoLabelEntry, TrunkMeter, build_label_tables, core_forward, ingress_map
from .netmodel import DSCP_NAMES, FifoPort, Packet, Port, ScheduledPort
from .routing import compute_spf
from .scenario import ScenarioSpec
from .traffic import OfferedLoad, Sink, VideoAppSpec, VideoSource, VoiceSource

log = logging.getLogger(__name__)


@dataclass
class ClassCounts:
    created: int = 0
    delivered: int = 0
    dropped: dict[str, int] = field(default_factory=dict)
    in_flight: int = 0

    @property
    def dropped_total(self) -> int:
        return sum(self.dropped.values())

    def conserved(self) -> bool:
        return self.created == self.delivered + self.dropped_total + self.in_flight


@dataclass
class RunReport:
    scenario: str
    ip_version: int
    qos_mode: str
    seed: int
    duration: float
    build: str
    analysis_window: tuple[float, float]
    classes: list[str]
    counts: dict[str, ClassCounts]
    arrival: dict[str, np.ndarray]   # seconds
    owd: dict[str, np.ndarray]       # seconds
    utilization: list[UtilizationStats]
    igp: list[tuple[str, str, float, str]]
    offered_bps: dict[str, float]
    trunks: dict[str, dict[str, int]] = field(default_factory=dict)
    events: int = 0

    def series(self, cls: str, mode: str) -> np.ndarray:
        return ipdv_series(self.owd[cls], mode)

    def summary(self, cls: str, mode: str) -> PdvSummary:
        return summarize(self.series(cls, mode))

    def summaries(self, mode: str) -> dict[str, PdvSummary]:
        return {c: self.summary(c, mode) for c in self.classes if len(self.owd[c]) >= 2}

    def conserved(self) -> bool:
        return all(c.conserved() for c in self.counts.values())


_ARRIVALS = (Port._arrive, ScheduledPort._arrive_and_done)


class Network:
    """Nodes, ports and forwarding state for one run."""

    def __init__(self, spec: ScenarioSpec, keep_packets: bool = False) -> None:
        self.spec = spec
        self.sim = Simulator()
        self.sink = Sink()
        if keep_packets:
            self.sink.keep_hops = []
        self.offered = OfferedLoad()
        self.topology = spec.topology
        self.routes = compute_spf(spec.topology)
        self.drops: dict[str, dict[str, int]] = {}
        self.created: dict[str, int] = {}
        self.sources: list = []

        self.acl = spec.acl
        self.classify_at: set[tuple[str, str]] = set()
        self.policy = None
        attach: set[str] = set()
        if spec.policy is not None:
            self.policy = spec.policy.traffic_policy()
            attach = set(spec.policy.attach)
            for iface in spec.policy.classify_at:
                node, peer = iface.split("<-", 1)
                self.classify_at.add((node, peer))

        self.te = None
        self.label_tables = {}
        self.meters: dict[str, TrunkMeter] = {}
        self.lers_with_bindings: set[str] = set()
        if spec.te is not None:
            self.te = spec.te.config()
            self.label_tables = build_label_tables(list(self.te.lsps.values()), spec.topology)
            if spec.options.trunk_metering:
                self.meters = {n: TrunkMeter(t) for n, t in self.te.trunks.items()}
            self.lers_with_bindings = {b.node for b in self.te.bindings}

        self.ports: dict[tuple[str, str], Port] = {}
        for link in spec.topology.links:
            for a, b in ((link.a, link.b), (link.b, link.a)):
                deliver = self._make_receiver(b)
                name = f"{a}->{b}"
                if name in attach and self.policy is not None:
                    sched = CbwfqScheduler(self.policy, link.rate, rng_stream(spec.seed, f"wred:{name}"),
                                           default_limit=spec.options.fifo_limit,
                                           l2_overhead=link.l2_overhead)
                    port = ScheduledPort(self.sim, a, b, link, deliver, sched, self._sched_class,
                                         on_drop=self._count_drop)
                else:
                    port = FifoPort(self.sim, a, b, link, deliver, spec.options.fifo_limit,
                                    on_drop=self._count_drop)
                self.ports[(a, b)] = port

        self._build_sources()

    # ------------------------------------------------------------ helpers

    def _sched_class(self, pkt: Packet) -> str:
        if pkt.label_stack:
            return self.te.exp_map.phb_for_exp(pkt.label_stack[-1][1])
        return DSCP_NAMES.get(pkt.dscp, "BE")

    def _count_drop(self, pkt: Packet, reason: str) -> None:
        d = self.drops.setdefault(pkt.cls, {})
        d[reason] = d.get(reason, 0) + 1

    def _make_receiver(self, node_id: str):
        kind = self.topology.nodes[node_id].kind
        if kind == "workstation":
            return lambda pkt, frm, _n=node_id: self._at_host(_n, pkt, frm)
        if kind == "switch":
            return lambda pkt, frm, _n=node_id: self._at_switch(_n, pkt, frm)
        return lambda pkt, frm, _n=node_id: self._at_router(_n, pkt, frm)

    def _at_host(self, node: str, pkt: Packet, frm: str) -> None:
        now = self.sim.now
        pkt.hops.append((node, now))
        if pkt.dst == node:
            self.sink.record(pkt, now)
        else:
            self._count_drop(pkt, "misdelivered")

    def _at_switch(self, node: str, pkt: Packet, frm: str) -> None:
        pkt.hops.append((node, self.sim.now))
        self.ports[(node, self.routes[node][pkt.dst])].send(pkt)

    def _at_router(self, node: str, pkt: Packet, frm: str) -> None:
        now = self.sim.now
        pkt.hops.append((node, now))
        if (node, frm) in self.classify_at and not pkt.label_stack:
            classify_and_mark(pkt, self.acl)
        nxt = None
        if pkt.label_stack:
            try:
                nxt, _ = core_forward(pkt, self.label_tables[node], self.te.exp_map)
            except (NoLabelEntry, KeyError):
                self._count_drop(pkt, "no_label")
                return
        elif node in self.lers_with_bindings:
            try:
                nxt, _ = ingress_map(pkt, node, frm, self.te, self.label_tables, self.meters, now)
            except NoBinding:
                nxt = None
        if nxt is None:
            if pkt.dst == node:
                self._count_drop(pkt, "misdelivered")
                return
            nxt = self.routes[node][pkt.dst]
        self.ports[(node, nxt)].send(pkt)

    def _build_sources(self) -> None:
        spec = self.spec
        stop = to_ns(spec.duration)
        for app in spec.apps:
            src = app.source
            addr = self.topology.nodes[src].address(spec.ip_version)
            first_hop = self.routes[src][app.sink]
            port = self.ports[(src, first_hop)]

            def send(pkt, _port=port, _src=src):
                self.created[pkt.cls] = self.created.get(pkt.cls, 0) + 1
                pkt.hops.append((_src, self.sim.now))
                _port.send(pkt)

            profile = spec.profiles[app.profile]
            if isinstance(app, VideoAppSpec):
                s = VideoSource(self.sim, app, profile, spec.ip_version, addr, send, self.offered,
                                spec.options.max_segment, stop)
            else:
                s = VoiceSource(self.sim, app, profile, spec.ip_version, addr, send, self.offered,
                                rng_stream(spec.seed, f"voice:{app.source}:{app.name}"), stop)
                self.sink.register_voice(s.flow, app.codec_delay)
            self.sources.append(s)

    # ------------------------------------------------------------ results

    def in_flight_by_class(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for entry in self.sim._heap:
            action, args = entry[2], entry[3]
            if getattr(action, "__func__", None) in _ARRIVALS:
                cls = args[0].cls
                counts[cls] = counts.get(cls, 0) + 1
        for port in self.ports.values():
            if isinstance(port, ScheduledPort):
                for state in port.scheduler.classes.values():
                    for _, pkt in state.queue:
                        counts[pkt.cls] = counts.get(pkt.cls, 0) + 1
        return counts

    def run(self) -> int:
        return self.sim.run_until(to_ns(self.spec.duration))


def run_scenario(spec: ScenarioSpec, seed_override: Optional[int] = None,
                 keep_packets: bool = False) -> RunReport:
    if seed_override is not None:
        spec = spec.with_overrides(seed=seed_override)
    net = Network(spec, keep_packets=keep_packets)
    log.info("running %s (IPv%d, %s) for %.0f s, seed %d", spec.name, spec.ip_version,
             spec.qos_mode, spec.duration, spec.seed)
    events = net.run()
    report = collect_report(net)
    report.events = events
    if keep_packets:
        report.packets = net.sink.keep_hops  # type: ignore[attr-defined]
        report.network = net  # type: ignore[attr-defined]
    return report


def collect_report(net: Network) -> RunReport:
    spec = net.spec
    classes = spec.classes()
    in_flight = net.in_flight_by_class()
    counts = {}
    arrival, owd = {}, {}
    for cls in classes:
        counts[cls] = ClassCounts(created=net.created.get(cls, 0),
                                  delivered=net.sink.delivered.get(cls, 0),
                                  dropped=dict(sorted(net.drops.get(cls, {}).items())),
                                  in_flight=in_flight.get(cls, 0))
        series = net.sink.series.get(cls)
        if series is None:
            arrival[cls] = np.zeros(0)
            owd[cls] = np.zeros(0)
        else:
            arrival[cls] = np.frombuffer(series.arrival, dtype=np.int64) / NS_PER_S
            owd[cls] = np.frombuffer(series.owd, dtype=np.int64) / NS_PER_S

    t0 = min(spec.options.analysis_start, spec.duration)
    t1 = spec.duration
    if t1 <= t0:
        t0 = 0.0
    window = (t0, t1)
    util = []
    for (a, b), port in net.ports.items():
        util.append(link_utilization(port.trace, window, port.link.name, f"{a}->{b}"))
    core = [u for u in util if _is_core(net, u.direction)]
    igp = [(u.link, u.direction, u.busy_fraction, verdict)
           for u, verdict in igp_analysis(core, spec.options.over_utilized, spec.options.under_utilized)]
    offered = {cls: net.offered.rate_bps(cls, t0, t1) for cls in classes}
    trunks = {name: {"in_profile": m.in_profile, "out_of_profile": m.out_of_profile,
                     "in_bits": m.in_bits, "out_bits": m.out_bits}
              for name, m in sorted(net.meters.items())}
    return RunReport(scenario=spec.name, ip_version=spec.ip_version, qos_mode=spec.qos_mode,
                     seed=spec.seed, duration=spec.duration, build=__version__,
                     analysis_window=window, classes=classes, counts=counts, arrival=arrival,
                     owd=owd, utilization=util, igp=igp, offered_bps=offered, trunks=trunks)


def _is_core(net: Network, direction: str) -> bool:
    a, b = direction.split("->")
    nodes = net.topology.nodes
    return nodes[a].is_router and nodes[b].is_router


__all__ = ["Network", "RunReport", "ClassCounts", "run_scenario", "collect_report", "PDV_MODES"]
