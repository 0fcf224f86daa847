"""Scenario files: TOML documents with ``include`` overlays, validated into a
:class:`ScenarioSpec`."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .diffserv import AclRule, CbwfqClass, PolicyEntry, PolicyError, TrafficPolicy, WredProfile
from .mpls import ExpPhbMap, Lsp, MplsError, TeBinding, TeConfig, TrunkProfile, build_label_tables
from .netmodel import DSCP, LinkSpec, NodeSpec, Topology, TopologyError
from .traffic import ProfileSpec, VideoAppSpec, VoiceAppSpec

QOS_MODES = ("best-effort", "diffserv", "diffserv-mpls")
BUILTIN = ("scenario1", "scenario2", "scenario3", "scenario4", "scenario5", "scenario6")


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    pass


@dataclass
class Options:
    max_segment: int = 1500
    fifo_limit: int = 500
    analysis_start: float = 780.0
    over_utilized: float = 0.95
    under_utilized: float = 0.05
    trunk_metering: bool = True


@dataclass
class PolicyConfig:
    name: str
    classes: list[CbwfqClass]
    wred: dict[str, WredProfile]
    bindings: list[dict[str, str]]  # {"class", "wfq", "wred"}
    classify_at: list[str]          # "NODE<-NEIGHBOR" inbound interfaces
    attach: list[str]               # "NODE->NEIGHBOR" outbound interfaces

    def traffic_policy(self) -> TrafficPolicy:
        by_name = {c.name: c for c in self.classes}
        entries = []
        for b in self.bindings:
            wfq = copy.copy(by_name[b["wfq"]])
            wfq.name = b["class"]
            wred = self.wred.get(b["wred"]) if b.get("wred") else None
            entries.append(PolicyEntry(wfq, wred))
        return TrafficPolicy(self.name, entries, list(self.attach))


@dataclass
class TeSpec:
    lsps: list[Lsp]
    trunks: list[TrunkProfile]
    bindings: list[TeBinding]
    exp_map: dict[str, int]

    def config(self) -> TeConfig:
        return TeConfig(self.lsps, self.trunks, self.bindings, ExpPhbMap(self.exp_map))


@dataclass
class ScenarioSpec:
    name: str
    ip_version: int
    qos_mode: str
    topology: Topology
    profiles: dict[str, ProfileSpec]
    apps: list[Union[VideoAppSpec, VoiceAppSpec]]
    acl: list[AclRule] = field(default_factory=list)
    policy: Optional[PolicyConfig] = None
    te: Optional[TeSpec] = None
    duration: float = 1800.0
    seed: int = 42
    options: Options = field(default_factory=Options)
    description: str = ""

    def with_overrides(self, seed: Optional[int] = None,
                       duration: Optional[float] = None) -> "ScenarioSpec":
        spec = copy.deepcopy(self)
        if seed is not None:
            spec.seed = int(seed)
        if duration is not None:
            spec.duration = float(duration)
        return spec

    def classes(self) -> list[str]:
        seen = []
        for app in self.apps:
            if app.cls not in seen:
                seen.append(app.cls)
        return seen


# ---------------------------------------------------------------- loading

def _deep_merge(base: dict, top: dict) -> dict:
    out = dict(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _read_text(ref: str, base_dir: Optional[Path]) -> tuple[str, Optional[Path], str]:
    candidate = (base_dir / ref) if base_dir is not None else Path(ref)
    if candidate.exists():
        return candidate.read_text(), candidate.parent, str(candidate)
    if Path(ref).exists():
        p = Path(ref)
        return p.read_text(), p.parent, str(p)
    name = ref if ref.endswith(".toml") else f"{ref}.toml"
    data = resources.files("qospdv").joinpath("data", name)
    if data.is_file():
        return data.read_text(), None, f"<builtin {name}>"
    raise ParseError(f"scenario file {ref!r} not found")


def _load_raw(ref: str, base_dir: Optional[Path] = None, depth: int = 0) -> dict:
    if depth > 8:
        raise ParseError("include nesting too deep")
    text, here, label = _read_text(ref, base_dir)
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{label}: {exc}") from None
    merged: dict = {}
    for inc in doc.get("scenario", {}).get("include", []):
        merged = _deep_merge(merged, _load_raw(inc, here, depth + 1))
    doc = copy.deepcopy(doc)
    doc.get("scenario", {}).pop("include", None)
    return _deep_merge(merged, doc)


def _need(d: dict, key: str, where: str) -> Any:
    if key not in d:
        raise ValidationError(f"{where}: missing field {key!r}")
    return d[key]


def _build(raw: dict) -> ScenarioSpec:
    meta = raw.get("scenario", {})
    name = _need(meta, "name", "[scenario]")
    ip_version = int(_need(meta, "ip_version", "[scenario]"))
    if ip_version not in (4, 6):
        raise ValidationError(f"[scenario] ip_version: must be 4 or 6, got {ip_version}")
    qos_mode = _need(meta, "qos_mode", "[scenario]")
    if qos_mode not in QOS_MODES:
        raise ValidationError(f"[scenario] qos_mode: {qos_mode!r} not in {QOS_MODES}")

    topo = Topology()
    try:
        for i, n in enumerate(raw.get("topology", {}).get("nodes", [])):
            topo.add_node(NodeSpec(_need(n, "id", f"[topology] node {i}"), _need(n, "kind", f"node {n.get('id')}"),
                                   n.get("ipv4"), n.get("ipv6")))
        for i, l in enumerate(raw.get("links", [])):
            where = f"[links] #{i}"
            topo.add_link(LinkSpec(_need(l, "a", where), _need(l, "b", where), int(_need(l, "rate", where)),
                                   float(l.get("prop_delay", 0.0)), int(l.get("l2_overhead", 7)),
                                   float(l.get("cost", 1.0))))
    except (TopologyError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"[topology]: {exc}") from None
    if not topo.nodes:
        raise ValidationError("[topology]: no nodes")
    if not topo.is_connected():
        raise ValidationError("[topology]: graph is not connected")

    profiles = {}
    for p in raw.get("profiles", []):
        prof = ProfileSpec(_need(p, "name", "[profiles]"), float(p.get("start", 100.0)),
                           p.get("repeatability", "once"), p.get("operation", "simultaneous"))
        profiles[prof.name] = prof

    apps: list = []
    for a in raw.get("apps", []):
        where = f"[apps] {a.get('name', '?')}"
        kind = _need(a, "kind", where)
        common = dict(name=_need(a, "name", where), cls=_need(a, "class", where),
                      source=_need(a, "source", where), sink=_need(a, "sink", where),
                      start_offset=float(_need(a, "start_offset", where)),
                      profile=_need(a, "profile", where))
        if kind == "video":
            app = VideoAppSpec(frame_bytes=int(_need(a, "frame_bytes", where)),
                               frame_rate=float(_need(a, "frame_rate", where)), **common)
        elif kind == "voice":
            extra = {k: a[k] for k in ("codec_rate", "sample_interval", "frames_per_packet",
                                       "silence_mean", "talkspurt_mean", "compression_delay",
                                       "decompression_delay") if k in a}
            app = VoiceAppSpec(**common, **extra)
        else:
            raise ValidationError(f"{where}: unknown kind {kind!r}")
        for end in (app.source, app.sink):
            if end not in topo.nodes:
                raise ValidationError(f"{where}: undefined node {end!r}")
            if topo.nodes[end].kind != "workstation":
                raise ValidationError(f"{where}: {end} is not a workstation")
            try:
                topo.nodes[end].address(ip_version)
            except TopologyError as exc:
                raise ValidationError(f"{where}: {exc}") from None
        if app.profile not in profiles:
            raise ValidationError(f"{where}: undefined profile {app.profile!r}")
        if app.cls not in DSCP:
            raise ValidationError(f"{where}: unknown class {app.cls!r}")
        apps.append(app)

    acl = []
    policy = None
    te = None
    if qos_mode != "best-effort":
        try:
            for r in raw.get("acl", []):
                acl.append(AclRule(_need(r, "name", "[acl]"), _need(r, "source", "[acl]"),
                                   _need(r, "wildcard", "[acl]"), _need(r, "dscp", "[acl]"),
                                   r.get("action", "permit")))
            classes = [CbwfqClass(_need(c, "name", "[cbwfq]"), float(_need(c, "bandwidth_percent", "[cbwfq]")),
                                  int(c.get("queue_limit", 500)), bool(c.get("priority", False)),
                                  c.get("bandwidth_type", "relative"))
                       for c in raw.get("cbwfq", [])]
            wred = {w["name"]: WredProfile(int(w.get("exp_weight", 9)), float(w.get("min_th", 100)),
                                           float(w.get("max_th", 200)), int(w.get("mark_prob_denominator", 10)),
                                           w.get("match", "dscp"))
                    for w in raw.get("wred", [])}
        except (PolicyError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"[policy]: {exc}") from None
        praw = raw.get("policy")
        if praw is None:
            raise ValidationError(f"qos_mode {qos_mode} requires a [policy] section")
        class_names = {c.name for c in classes}
        for b in praw.get("classes", []):
            if b.get("wfq") not in class_names:
                raise ValidationError(f"[policy] class {b.get('class')}: undefined CBWFQ profile {b.get('wfq')!r}")
            if b.get("wred") and b["wred"] not in wred:
                raise ValidationError(f"[policy] class {b.get('class')}: undefined WRED profile {b['wred']!r}")
            if b.get("class") not in DSCP:
                raise ValidationError(f"[policy]: unknown traffic class {b.get('class')!r}")
        for iface in praw.get("attach", []):
            _check_iface(topo, iface, "->", "[policy] attach")
        for iface in praw.get("classify_at", []):
            _check_iface(topo, iface, "<-", "[policy] classify_at")
        policy = PolicyConfig(praw.get("name", "Traffic_Policy"), classes, wred,
                              [dict(b) for b in praw.get("classes", [])],
                              list(praw.get("classify_at", [])), list(praw.get("attach", [])))
        try:
            policy.traffic_policy()
        except PolicyError as exc:
            raise ValidationError(f"[policy]: {exc}") from None

    if qos_mode == "diffserv-mpls":
        try:
            lsps = [Lsp(_need(l, "name", "[lsps]"), list(_need(l, "hops", "[lsps]")),
                        bool(l.get("bidirectional", True))) for l in raw.get("lsps", [])]
            trunks = [TrunkProfile(_need(t, "name", "[trunks]"), float(t["max_bit_rate"]), float(t["peak_burst"]),
                                   float(t["avg_bit_rate"]), float(t["max_burst"]), t["traffic_class"],
                                   t.get("out_of_profile_action", "transmit"), t.get("remark", "unchanged"))
                      for t in raw.get("trunks", [])]
            bindings = [TeBinding(_need(b, "node", "[bindings]"), b.get("in_interface"), _need(b, "fec", "[bindings]"),
                                  _need(b, "dscp", "[bindings]"), _need(b, "trunk", "[bindings]"),
                                  _need(b, "lsp", "[bindings]")) for b in raw.get("bindings", [])]
        except KeyError as exc:
            raise ValidationError(f"[trunks]: missing field {exc}") from None
        except MplsError as exc:
            raise ValidationError(str(exc)) from None
        for l in lsps:
            for h in l.hops:
                if h not in topo.nodes:
                    raise ValidationError(f"[lsps] {l.name}: undefined node {h!r}")
        te = TeSpec(lsps, trunks, bindings, dict(raw.get("exp_map", ExpPhbMap.DEFAULT)))
        try:
            te.config()
            build_label_tables(lsps, topo)
        except MplsError as exc:
            raise ValidationError(f"[bindings]: {exc}") from None

    opt_raw = raw.get("options", {})
    known = set(Options.__dataclass_fields__)
    unknown = set(opt_raw) - known
    if unknown:
        raise ValidationError(f"[options]: unknown keys {sorted(unknown)}")
    options = Options(**opt_raw)

    return ScenarioSpec(name=name, ip_version=ip_version, qos_mode=qos_mode, topology=topo,
                        profiles=profiles, apps=apps, acl=acl, policy=policy, te=te,
                        duration=float(meta.get("duration", 1800.0)), seed=int(meta.get("seed", 42)),
                        options=options, description=meta.get("description", ""))


def _check_iface(topo: Topology, iface: str, sep: str, where: str) -> None:
    if sep not in iface:
        raise ValidationError(f"{where}: malformed interface {iface!r} (expected NODE{sep}PEER)")
    a, b = iface.split(sep, 1)
    if topo.link_between(a, b) is None:
        raise ValidationError(f"{where}: no link between {a!r} and {b!r}")


def load_scenario(ref: Union[str, Path]) -> ScenarioSpec:
    """Load a built-in scenario name or a TOML path, resolving includes."""
    return _build(_load_raw(str(ref)))


def loads_scenario(text: str) -> ScenarioSpec:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc)) from None
    merged: dict = {}
    for inc in doc.get("scenario", {}).get("include", []):
        merged = _deep_merge(merged, _load_raw(inc))
    doc.get("scenario", {}).pop("include", None)
    return _build(_deep_merge(merged, doc))


# ---------------------------------------------------------------- dumping

def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    doc: dict[str, Any] = {
        "scenario": {"name": spec.name, "ip_version": spec.ip_version, "qos_mode": spec.qos_mode,
                     "duration": spec.duration, "seed": spec.seed, "description": spec.description},
        "topology": {"nodes": [asdict(n) for n in spec.topology.nodes.values()]},
        "links": [asdict(l) for l in spec.topology.links],
        "profiles": [asdict(p) for p in spec.profiles.values()],
        "apps": [],
        "options": asdict(spec.options),
    }
    for app in spec.apps:
        d = asdict(app)
        d["class"] = d.pop("cls")
        d = {"kind": "video" if isinstance(app, VideoAppSpec) else "voice", **d}
        doc["apps"].append(d)
    if spec.acl:
        doc["acl"] = [{"name": r.name, "action": r.action, "source": r.source,
                       "wildcard": r.wildcard, "dscp": r.set_dscp} for r in spec.acl]
    if spec.policy is not None:
        p = spec.policy
        doc["cbwfq"] = [asdict(c) for c in p.classes]
        doc["wred"] = [{"name": k, **asdict(v)} for k, v in p.wred.items()]
        doc["policy"] = {"name": p.name, "classify_at": p.classify_at, "attach": p.attach,
                         "classes": p.bindings}
    if spec.te is not None:
        t = spec.te
        doc["trunks"] = [asdict(x) for x in t.trunks]
        doc["lsps"] = [{"name": l.name, "hops": l.hops, "bidirectional": l.bidirectional} for l in t.lsps]
        doc["bindings"] = [asdict(b) for b in t.bindings]
        doc["exp_map"] = dict(t.exp_map)
    return _clean(doc)


def dump_scenario(spec: ScenarioSpec) -> str:
    return tomli_w.dumps(scenario_to_dict(spec))


def builtin_scenarios() -> list[tuple[str, str]]:
    out = []
    for name in BUILTIN:
        spec = load_scenario(name)
        out.append((name, spec.description))
    return out
