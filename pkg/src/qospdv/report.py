"""Report files for one run and comparisons between two runs.

Every file written here is a pure function of the run, so two runs with the
same scenario, seed and duration produce byte-identical output.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from .metrics import DEFAULT_PDV_MODE, PDV_MODES, PdvSummary, TooFewSamples
from .simulation import RunReport

SUMMARY_HEADER = ["class", "min_s", "avg_s", "max_s", "stddev_s"]
SERIES_HEADER = ["arrival_time_s", "owd_s", "ipdv_s"]
UTIL_HEADER = ["link", "direction", "busy_fraction"]
IGP_HEADER = ["link", "direction", "busy_fraction", "verdict"]
COUNTS_HEADER = ["class", "created", "delivered", "dropped", "in_flight", "drop_reasons"]
TRUNK_HEADER = ["trunk", "in_profile", "out_of_profile", "in_bits", "out_bits"]
FORMATS = ("csv", "table")
RELATIONS = ("leq-avg-pdv", "geq-avg-pdv", "ratio-bound")

PathLike = Union[str, Path]


class ClassMismatch(ValueError):
    pass


def fmt_sci(x: float) -> str:
    # exact zeros print bare so constant-delay rows read 0,0,0,0
    return "0" if x == 0 else f"{x:.6e}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _summary_rows(report: RunReport, mode: str) -> list[list[str]]:
    rows = []
    for cls in report.classes:
        try:
            s = report.summary(cls, mode)
        except TooFewSamples:
            continue
        rows.append([cls, *(fmt_sci(v) for v in s)])
    return rows


def write_series(report: RunReport, cls: str, mode: str, path: Path) -> int:
    """Per-packet rows (arrival, OWD, PDV value); returns the row count."""
    arrival = report.arrival[cls]
    owd = report.owd[cls]
    if len(owd) < 2:
        _write_csv(path, SERIES_HEADER, [])
        return 0
    pdv = report.series(cls, mode)
    lines = [",".join(SERIES_HEADER)]
    lines.extend(f"{a:.9f},{d:.9f},{p:.9e}" for a, d, p in
                 zip(arrival[1:].tolist(), owd[1:].tolist(), pdv.tolist()))
    path.write_text("\n".join(lines) + "\n")
    return len(lines) - 1


def report_document(report: RunReport, mode: str) -> dict:
    """Everything except the per-packet series, as plain JSON types."""
    summaries = {}
    for m in PDV_MODES:
        summaries[m] = {cls: dict(zip(("min", "avg", "max", "stddev"), map(float, s)))
                        for cls, s in report.summaries(m).items()}
    return {
        "scenario": report.scenario,
        "ip_version": report.ip_version,
        "qos_mode": report.qos_mode,
        "seed": report.seed,
        "duration": report.duration,
        "build": report.build,
        "events": report.events,
        "pdv_mode": mode,
        "analysis_window": list(report.analysis_window),
        "classes": list(report.classes),
        "counts": {c: {"created": k.created, "delivered": k.delivered, "dropped": k.dropped,
                       "in_flight": k.in_flight} for c, k in report.counts.items()},
        "conserved": report.conserved(),
        "offered_bps": {c: float(v) for c, v in report.offered_bps.items()},
        "summaries": summaries,
        "utilization": [{"link": u.link, "direction": u.direction,
                         "busy_fraction": u.busy_fraction, "bits": u.bits}
                        for u in sorted(report.utilization, key=lambda u: (u.link, u.direction))],
        "igp": [{"link": l, "direction": d, "busy_fraction": b, "verdict": v}
                for l, d, b, v in report.igp],
        "trunks": report.trunks,
    }


def format_table(report: RunReport, mode: str) -> str:
    head = (f"{report.scenario}: IPv{report.ip_version}, {report.qos_mode}, seed {report.seed}, "
            f"{report.duration:g} s, PDV mode {mode}")
    lines = [head, "",
             f"{'Class':<8}{'Min. [s]':>14}{'Avg. [s]':>14}{'Max. [s]':>14}{'Std Dev [s]':>14}"]
    for cls, s in report.summaries(mode).items():
        lines.append(f"{cls:<8}" + "".join(f"{v:>14.4e}" for v in s))
    lines += ["", f"{'Class':<8}{'created':>10}{'delivered':>11}{'dropped':>9}{'in flight':>11}"]
    for cls, k in report.counts.items():
        lines.append(f"{cls:<8}{k.created:>10}{k.delivered:>11}{k.dropped_total:>9}{k.in_flight:>11}")
    lines += ["", "Core links (IGP analysis):"]
    for link, direction, busy, verdict in report.igp:
        lines.append(f"  {direction:<14}{busy:>8.3f}  {verdict}")
    return "\n".join(lines) + "\n"


def emit_report(report: RunReport, out_dir: PathLike, fmt: str = "csv",
                pdv_mode: str = DEFAULT_PDV_MODE, figures: bool = True) -> list[Path]:
    """Write the run's report files into ``out_dir``; return the paths written."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
    if pdv_mode not in PDV_MODES:
        raise ValueError(f"unknown PDV mode {pdv_mode!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str) -> Path:
        p = out / name
        written.append(p)
        return p

    _write_csv(put("summary.csv"), SUMMARY_HEADER, _summary_rows(report, pdv_mode))
    for m in PDV_MODES:
        _write_csv(put(f"summary_{m}.csv"), SUMMARY_HEADER, _summary_rows(report, m))
    for cls in report.classes:
        write_series(report, cls, pdv_mode, put(f"series_{cls}.csv"))
    _write_csv(put("counts.csv"), COUNTS_HEADER,
               [[c, k.created, k.delivered, k.dropped_total, k.in_flight,
                 ";".join(f"{r}={n}" for r, n in k.dropped.items())]
                for c, k in report.counts.items()])
    util = sorted(report.utilization, key=lambda u: (u.link, u.direction))
    _write_csv(put("utilization.csv"), UTIL_HEADER,
               [[u.link, u.direction, f"{u.busy_fraction:.6f}"] for u in util])
    _write_csv(put("igp.csv"), IGP_HEADER,
               [[l, d, f"{b:.6f}", v] for l, d, b, v in report.igp])
    if report.trunks:
        _write_csv(put("trunks.csv"), TRUNK_HEADER,
                   [[n, t["in_profile"], t["out_of_profile"], t["in_bits"], t["out_bits"]]
                    for n, t in report.trunks.items()])
    doc = report_document(report, pdv_mode)
    put("report.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    if fmt == "table":
        put("summary.txt").write_text(format_table(report, pdv_mode))
    if figures:
        from .plotting import render_run_figures
        written.extend(render_run_figures(report, out, pdv_mode))
    return written


# ------------------------------------------------------------ comparison

def read_summary(path: PathLike, pdv_mode: Optional[str] = None) -> dict[str, PdvSummary]:
    """Load a summary CSV, or the one for ``pdv_mode`` from a report directory."""
    p = Path(path)
    if p.is_dir():
        p = p / (f"summary_{pdv_mode}.csv" if pdv_mode else "summary.csv")
    with p.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != SUMMARY_HEADER:
        raise ValueError(f"{p}: not a summary file")
    return {r[0]: PdvSummary(*(float(v) for v in r[1:])) for r in rows[1:]}


@dataclass(frozen=True)
class Verdict:
    cls: str
    a_avg: float
    b_avg: float
    ratio: float
    passed: bool


def compare_summaries(a: dict[str, PdvSummary], b: dict[str, PdvSummary], relation: str,
                      ratio: Optional[float] = None,
                      classes: Optional[Sequence[str]] = None) -> list[Verdict]:
    if relation not in RELATIONS:
        raise ValueError(f"unknown relation {relation!r}; choose from {RELATIONS}")
    if relation == "ratio-bound" and ratio is None:
        raise ValueError("ratio-bound needs a ratio")
    if classes is None:
        if set(a) != set(b):
            raise ClassMismatch(f"class sets differ: {sorted(set(a) ^ set(b))}")
        classes = list(a)
    else:
        missing = [c for c in classes if c not in a or c not in b]
        if missing:
            raise ClassMismatch(f"classes missing from a report: {missing}")
    out = []
    for cls in classes:
        x, y = a[cls].avg, b[cls].avg
        r = x / y if y != 0 else (1.0 if x == 0 else float("inf"))
        if relation == "leq-avg-pdv":
            ok = x <= y
        elif relation == "geq-avg-pdv":
            ok = x >= y
        else:
            ok = x <= ratio * y
        out.append(Verdict(cls, x, y, r, ok))
    return out


def compare(a: PathLike, b: PathLike, relation: str, ratio: Optional[float] = None,
            classes: Optional[Sequence[str]] = None,
            pdv_mode: Optional[str] = None) -> list[Verdict]:
    """Per-class verdicts on average PDV between two report directories."""
    return compare_summaries(read_summary(a, pdv_mode), read_summary(b, pdv_mode),
                             relation, ratio, classes)
