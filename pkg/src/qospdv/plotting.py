"""File-only figures (Agg backend) for single runs and run comparisons."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import PdvSummary  # noqa: E402
from .simulation import RunReport  # noqa: E402

# no software/date chunks, so repeated runs write identical files
_META = {"Software": None}


def binned_mean(t: np.ndarray, y: np.ndarray, width: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean of ``y`` in consecutive time bins of ``width`` seconds (empty bins skipped)."""
    if len(t) == 0:
        return t, y
    idx = np.floor(t / width).astype(np.int64)
    idx -= idx[0]
    counts = np.bincount(idx)
    sums = np.bincount(idx, weights=y)
    keep = counts > 0
    centers = (np.nonzero(keep)[0] + np.floor(t[0] / width) + 0.5) * width
    return centers, sums[keep] / counts[keep]


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_delay(report: RunReport, path: Path, pdv_mode: str) -> Path:
    """Binned OWD and PDV against arrival time, one line per class."""
    width = max(1.0, report.duration / 300)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    for cls in report.classes:
        arr, owd = report.arrival[cls], report.owd[cls]
        if len(owd) < 2:
            continue
        ax1.plot(*binned_mean(arr, owd, width), lw=1, label=cls)
        ax2.plot(*binned_mean(arr[1:], report.series(cls, pdv_mode), width), lw=1, label=cls)
    ax1.set_ylabel(f"one-way delay [s], {width:g} s means")
    ax1.set_yscale("log")
    ax2.set_ylabel("variance [s²]" if pdv_mode == "variance" else f"PDV, {pdv_mode} [s]")
    ax2.set_xlabel("simulation time [s]")
    if pdv_mode == "consecutive-signed":
        ax2.set_yscale("symlog", linthresh=1e-6)
    else:
        ax2.set_yscale("symlog", linthresh=1e-9)
        ax2.set_ylim(bottom=0)
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
    ax1.legend(ncol=4, fontsize=8)
    ax1.set_title(f"{report.scenario} (IPv{report.ip_version}, {report.qos_mode})")
    fig.tight_layout()
    return _save(fig, path)


def plot_utilization(report: RunReport, path: Path) -> Path:
    rows = [(d, b) for _, d, b, _ in report.igp]
    fig, ax = plt.subplots(figsize=(7, max(3, 0.25 * len(rows))))
    ax.barh([d for d, _ in rows], [b for _, b in rows], color="tab:blue")
    ax.axvline(0.95, color="tab:red", ls="--", lw=1)
    ax.axvline(0.05, color="tab:gray", ls=":", lw=1)
    lo, hi = report.analysis_window
    ax.set_xlabel(f"busy fraction, {lo:g}-{hi:g} s")
    ax.set_xlim(0, 1.05)
    ax.invert_yaxis()
    ax.tick_params(axis="y", labelsize=7)
    fig.tight_layout()
    return _save(fig, path)


def plot_avg_pdv(runs: Mapping[str, Mapping[str, PdvSummary]], path: Path,
                 ylabel: str = "average PDV [s]") -> Path:
    """Grouped bars of average PDV per class, one bar per run."""
    classes = sorted({c for s in runs.values() for c in s})
    width = 0.8 / max(1, len(runs))
    fig, ax = plt.subplots(figsize=(9, 4.5))
    x = np.arange(len(classes))
    for i, (name, summ) in enumerate(runs.items()):
        vals = [summ[c].avg if c in summ else np.nan for c in classes]
        ax.bar(x + i * width, vals, width, label=name)
    ax.set_xticks(x + width * (len(runs) - 1) / 2, classes)
    ax.set_yscale("log")
    ax.set_ylabel(ylabel)
    ax.grid(axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def render_run_figures(report: RunReport, out_dir: Path, pdv_mode: str) -> list[Path]:
    out = Path(out_dir)
    paths = [plot_delay(report, out / f"delay_{pdv_mode}.png", pdv_mode),
             plot_utilization(report, out / "utilization.png")]
    summ = report.summaries(pdv_mode)
    if summ:
        paths.append(plot_avg_pdv({report.scenario: summ}, out / f"avg_pdv_{pdv_mode}.png"))
    return paths
