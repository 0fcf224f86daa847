"""Delay-variation series, summary statistics and link utilization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .engine import NS_PER_S
from .netmodel import LinkTrace

PDV_MODES = ("consecutive-absolute", "consecutive-signed", "variance")
DEFAULT_PDV_MODE = "consecutive-absolute"


class TooFewSamples(ValueError):
    pass


class Empty(ValueError):
    pass


class PdvSummary(NamedTuple):
    min: float
    avg: float
    max: float
    stddev: float


def ipdv_series(delays: Sequence[float] | np.ndarray, mode: str = DEFAULT_PDV_MODE) -> np.ndarray:
    """Delay differences between consecutive arrivals, ``D[i+1] - D[i]``.

    ``variance`` mode instead yields, for every arrival after the first, the
    population variance of all delays seen so far (a running delay-variance
    trace); its last element is the variance of the whole series.
    """
    d = np.asarray(delays, dtype=np.float64)
    if d.size < 2:
        raise TooFewSamples(f"need at least 2 delay samples, got {d.size}")
    if mode == "consecutive-signed":
        return np.diff(d)
    if mode == "consecutive-absolute":
        return np.abs(np.diff(d))
    if mode == "variance":
        return running_variance(d)[1:]
    raise ValueError(f"unknown PDV mode {mode!r}")


def running_variance(x: np.ndarray) -> np.ndarray:
    # shifting by the mean keeps the cumulative-sum form well conditioned
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.mean()
    k = np.arange(1, x.size + 1, dtype=np.float64)
    s1 = np.cumsum(shifted)
    s2 = np.cumsum(shifted * shifted)
    var = (s2 - s1 * s1 / k) / k
    return np.maximum(var, 0.0)


def summarize(series: Sequence[float] | np.ndarray) -> PdvSummary:
    a = np.asarray(series, dtype=np.float64)
    if a.size == 0:
        raise Empty("cannot summarize an empty series")
    avg = float(a.mean())
    std = float(np.sqrt(np.mean((a - avg) ** 2)))
    return PdvSummary(float(a.min()), avg, float(a.max()), std)


@dataclass
class UtilizationStats:
    link: str
    direction: str
    busy_fraction: float
    bits: int
    window: tuple[float, float]


def link_utilization(trace: LinkTrace, window: tuple[float, float],
                     link: str = "", direction: str = "") -> UtilizationStats:
    t0, t1 = window
    if t1 <= t0:
        raise ValueError("utilization window must have t1 > t0")
    busy, bits = trace.window(int(round(t0 * NS_PER_S)), int(round(t1 * NS_PER_S)))
    frac = busy / ((t1 - t0) * NS_PER_S)
    return UtilizationStats(link, direction, min(1.0, frac), bits, (t0, t1))


def igp_analysis(utilization: Iterable[UtilizationStats], over: float = 0.95,
                 under: float = 0.05) -> list[tuple[UtilizationStats, str]]:
    """Flag hot and idle links, the evidence for moving traffic onto LSPs."""
    out = []
    for u in utilization:
        if u.busy_fraction >= over:
            verdict = "over-utilized"
        elif u.busy_fraction <= under:
            verdict = "under-utilized"
        else:
            verdict = "normal"
        out.append((u, verdict))
    return out
