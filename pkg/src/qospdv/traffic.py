"""Video-conference and G.711 voice workloads, plus the delay-recording sink."""

from __future__ import annotations

import random
from array import array
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, NamedTuple, Optional

from .engine import NS_PER_S, Simulator, to_ns
from .netmodel import Packet, segment


class NonIntegralPayload(ValueError):
    pass


@dataclass
class ProfileSpec:
    name: str
    start: float = 100.0
    repeatability: str = "once"
    operation: str = "simultaneous"


@dataclass
class VideoAppSpec:
    name: str
    cls: str
    source: str
    sink: str
    frame_bytes: int
    frame_rate: float
    start_offset: float
    profile: str

    @property
    def bit_rate(self) -> float:
        return self.frame_bytes * self.frame_rate * 8


@dataclass
class VoiceAppSpec:
    name: str
    cls: str
    source: str
    sink: str
    start_offset: float
    profile: str
    codec_rate: int = 64000
    sample_interval: float = 0.010
    frames_per_packet: int = 1
    silence_mean: float = 0.65
    talkspurt_mean: float = 0.352
    compression_delay: float = 0.02
    decompression_delay: float = 0.02

    @property
    def codec_delay(self) -> float:
        return self.compression_delay + self.decompression_delay


def voice_packetization(codec_rate: float, sample_interval: float,
                        frames_per_packet: int = 1) -> tuple[int, float]:
    """(payload bytes, packets per second) for a constant-rate codec."""
    if codec_rate <= 0 or sample_interval <= 0:
        raise ValueError("codec rate and sample interval must be positive")
    # Fraction avoids 64000*0.01 rounding artefacts
    bits = Fraction(codec_rate) * Fraction(str(sample_interval)) * frames_per_packet
    payload = bits / 8
    if payload.denominator != 1:
        raise NonIntegralPayload(f"{float(bits)} bits is not a whole number of bytes")
    pps = 1 / (Fraction(str(sample_interval)) * frames_per_packet)
    return int(payload), float(pps)


def video_emit_schedule(spec: VideoAppSpec, profile: ProfileSpec,
                        until: float) -> list[tuple[float, int]]:
    """(time, frame bytes) pairs from the call start up to ``until`` (exclusive)."""
    start = to_ns(profile.start + spec.start_offset)
    stop = to_ns(until)
    out = []
    k = 0
    while True:
        t = start + _frame_offset_ns(k, spec.frame_rate)
        if t >= stop:
            break
        out.append((t / NS_PER_S, spec.frame_bytes))
        k += 1
    return out


def _frame_offset_ns(k: int, frame_rate: float) -> int:
    # exact k/fps so long runs don't drift
    if float(frame_rate).is_integer():
        return k * NS_PER_S // int(frame_rate)
    return int(Fraction(k) * NS_PER_S / Fraction(str(frame_rate)))


def voice_onoff_next(state: str, rng: random.Random, talkspurt_mean: float = 0.352,
                     silence_mean: float = 0.65) -> tuple[str, float]:
    """Alternate talk/silence; the dwell is drawn for the state being entered."""
    if state == "talk":
        return "silence", rng.expovariate(1.0 / silence_mean)
    if state == "silence":
        return "talk", rng.expovariate(1.0 / talkspurt_mean)
    raise ValueError(f"unknown voice state {state!r}")


class OfferedLoad:
    """Application bytes handed to the network, binned per second by class."""

    def __init__(self) -> None:
        self.bins: dict[str, list[int]] = {}

    def add(self, cls: str, t_ns: int, nbytes: int) -> None:
        b = self.bins.setdefault(cls, [])
        idx = t_ns // NS_PER_S
        if idx >= len(b):
            b.extend([0] * (idx + 1 - len(b)))
        b[idx] += nbytes

    def rate_bps(self, cls: str, t0: float, t1: float) -> float:
        b = self.bins.get(cls, [])
        i0, i1 = int(t0), int(t1)
        return sum(b[i0:i1]) * 8 / (t1 - t0)


class _Endpoint:
    def __init__(self, sim: Simulator, spec, ip_version: int, src_addr: str,
                 send: Callable[[Packet], None], offered: OfferedLoad) -> None:
        self.sim = sim
        self.spec = spec
        self.ip_version = ip_version
        self.src_addr = src_addr
        self.send = send
        self.offered = offered
        self.flow = f"{spec.source}/{spec.name}"
        self.seq = 0
        self.created = 0

    def _packet(self, payload: int, transport: str) -> Packet:
        pkt = Packet(self.flow, self.spec.cls, self.spec.source, self.spec.sink,
                     self.src_addr, self.seq, self.ip_version, payload, transport,
                     self.sim.now)
        self.seq += 1
        self.created += 1
        return pkt


class VideoSource(_Endpoint):
    """Deterministic frame clock; each frame is split into 1500-byte segments."""

    transport = "udp"

    def __init__(self, sim, spec: VideoAppSpec, profile: ProfileSpec, ip_version, src_addr,
                 send, offered, max_segment: int = 1500, stop: Optional[int] = None) -> None:
        super().__init__(sim, spec, ip_version, src_addr, send, offered)
        self.max_segment = max_segment
        self.start = to_ns(profile.start + spec.start_offset)
        self.stop = stop
        self.sizes = segment(spec.frame_bytes, max_segment)
        self.k = 0
        sim.schedule(self.start, self._frame)

    def _frame(self) -> None:
        now = self.sim.now
        self.offered.add(self.spec.cls, now, self.spec.frame_bytes)
        for size in self.sizes:
            self.send(self._packet(size, self.transport))
        self.k += 1
        nxt = self.start + _frame_offset_ns(self.k, self.spec.frame_rate)
        if self.stop is None or nxt < self.stop:
            self.sim.schedule(nxt, self._frame)


class VoiceSource(_Endpoint):
    """On/off G.711 call: 80-byte packets every 10 ms during talkspurts."""

    transport = "rtp"

    def __init__(self, sim, spec: VoiceAppSpec, profile: ProfileSpec, ip_version, src_addr,
                 send, offered, rng: random.Random, stop: Optional[int] = None) -> None:
        super().__init__(sim, spec, ip_version, src_addr, send, offered)
        self.payload, pps = voice_packetization(spec.codec_rate, spec.sample_interval,
                                                spec.frames_per_packet)
        self.interval = to_ns(1.0 / pps)
        self.rng = rng
        self.stop = stop
        self.state = "silence"
        self.talk_end = 0
        self.talk_time = 0
        sim.schedule(to_ns(profile.start + spec.start_offset), self._next_state)

    def _next_state(self) -> None:
        spec = self.spec
        self.state, dwell = voice_onoff_next(self.state, self.rng, spec.talkspurt_mean,
                                             spec.silence_mean)
        now = self.sim.now
        end = now + max(1, to_ns(dwell))
        if self.state == "talk":
            self.talk_end = end
            self.talk_time += end - now
            self._emit()
        elif self.stop is None or end < self.stop:
            self.sim.schedule(end, self._next_state)

    def _emit(self) -> None:
        now = self.sim.now
        if self.stop is not None and now >= self.stop:
            return
        self.offered.add(self.spec.cls, now, self.payload)
        self.send(self._packet(self.payload, self.transport))
        nxt = now + self.interval
        if nxt < self.talk_end:
            self.sim.schedule(nxt, self._emit)
        else:
            self.sim.schedule(self.talk_end, self._next_state)


class DelaySample(NamedTuple):
    flow: str
    seq: int
    arrival: int
    owd: int


class DelaySeries:
    """Arrival-ordered one-way delays of one class (integer ns)."""

    def __init__(self, cls: str) -> None:
        self.cls = cls
        self.arrival = array("q")
        self.owd = array("q")
        self.seq = array("q")

    def __len__(self) -> int:
        return len(self.owd)

    def append(self, sample: DelaySample) -> None:
        self.arrival.append(sample.arrival)
        self.owd.append(sample.owd)
        self.seq.append(sample.seq)


class Sink:
    """Records one-way delay per class; voice flows get codec delay added."""

    def __init__(self) -> None:
        self.series: dict[str, DelaySeries] = {}
        self.codec_delay_ns: dict[str, int] = {}
        self.delivered: dict[str, int] = {}
        self.keep_hops: Optional[list[Packet]] = None

    def register_voice(self, flow: str, codec_delay: float) -> None:
        self.codec_delay_ns[flow] = to_ns(codec_delay)

    def record(self, packet: Packet, arrival: int) -> DelaySample:
        owd = arrival - packet.created_at + self.codec_delay_ns.get(packet.flow, 0)
        sample = DelaySample(packet.flow, packet.seq, arrival, owd)
        series = self.series.get(packet.cls)
        if series is None:
            series = self.series[packet.cls] = DelaySeries(packet.cls)
        series.append(sample)
        self.delivered[packet.cls] = self.delivered.get(packet.cls, 0) + 1
        if self.keep_hops is not None:
            self.keep_hops.append(packet)
        return sample


def sink_record(packet: Packet, arrival_time: float, codec_delay: float = 0.0) -> float:
    """One-way delay in seconds for a single packet."""
    return arrival_time - packet.created_at / NS_PER_S + codec_delay
