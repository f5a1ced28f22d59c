"""Pitch/yaw histograms and distribution reports over emitted label files.

Bins are anchored at multiples of the bin width (degrees), so bin frames are
stable across runs and the support of a histogram can be compared against a
finite pose pool.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import LabelRecord
from .novelview import PosePool


@dataclass(frozen=True)
class Histogram2D:
    """Sparse 2D histogram over (pitch, yaw) degrees."""

    bin_width_deg: float
    bins: dict[tuple[float, float], int]  # (pitch_lo, yaw_lo) -> count

    def total(self) -> int:
        return sum(self.bins.values())


@dataclass(frozen=True)
class StatsReport:
    n_records: int
    gaze: Histogram2D
    head: Histogram2D
    gaze_mean_deg: tuple[float, float]
    head_mean_deg: tuple[float, float]
    gaze_extent_deg: tuple[float, float, float, float]  # pitch lo/hi, yaw lo/hi
    head_extent_deg: tuple[float, float, float, float]


def _hist(pitch_deg: np.ndarray, yaw_deg: np.ndarray, width: float) -> Histogram2D:
    bins: dict[tuple[float, float], int] = {}
    for p, y in zip(pitch_deg, yaw_deg):
        key = (math.floor(p / width) * width, math.floor(y / width) * width)
        bins[key] = bins.get(key, 0) + 1
    return Histogram2D(width, bins)


def compute_stats(records: list[LabelRecord], bin_width_deg: float = 5.0) -> StatsReport:
    if not records:
        empty = Histogram2D(bin_width_deg, {})
        return StatsReport(0, empty, empty, (0, 0), (0, 0), (0, 0, 0, 0), (0, 0, 0, 0))
    gp = np.degrees([r.gaze_pitch for r in records])
    gy = np.degrees([r.gaze_yaw for r in records])
    hp = np.degrees([r.head_pitch for r in records])
    hy = np.degrees([r.head_yaw for r in records])
    return StatsReport(
        n_records=len(records),
        gaze=_hist(gp, gy, bin_width_deg),
        head=_hist(hp, hy, bin_width_deg),
        gaze_mean_deg=(float(gp.mean()), float(gy.mean())),
        head_mean_deg=(float(hp.mean()), float(hy.mean())),
        gaze_extent_deg=(float(gp.min()), float(gp.max()), float(gy.min()), float(gy.max())),
        head_extent_deg=(float(hp.min()), float(hp.max()), float(hy.min()), float(hy.max())),
    )


def render_text(report: StatsReport) -> str:
    if report.n_records == 0:
        return "no label records: empty report"
    lines = [f"records: {report.n_records}"]
    for name, hist, mean, ext in (
        ("gaze", report.gaze, report.gaze_mean_deg, report.gaze_extent_deg),
        ("head", report.head, report.head_mean_deg, report.head_extent_deg),
    ):
        lines.append(
            f"{name}: mean=({mean[0]:+.1f}, {mean[1]:+.1f}) deg  "
            f"pitch=[{ext[0]:+.1f}, {ext[1]:+.1f}]  yaw=[{ext[2]:+.1f}, {ext[3]:+.1f}]  "
            f"occupied bins={len(hist.bins)} (width {hist.bin_width_deg} deg)"
        )
        for (p, y), count in sorted(hist.bins.items()):
            lines.append(f"  {name} [{p:+7.1f}, {y:+7.1f}): {count}")
    return "\n".join(lines)


def write_csv(report: StatsReport, out_prefix: str | Path) -> list[Path]:
    """Write <prefix>_gaze.csv and <prefix>_head.csv (occupied bins only)."""
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, hist in (("gaze", report.gaze), ("head", report.head)):
        path = Path(f"{out_prefix}_{name}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pitch_lo_deg", "yaw_lo_deg", "count"])
            for (p, y), count in sorted(hist.bins.items()):
                w.writerow([p, y, count])
        paths.append(path)
    return paths


def head_pose_support_distance(records: list[LabelRecord], pool: PosePool) -> float:
    """Largest distance (deg) from an emitted head pose to its nearest pool entry.

    0 (up to float noise) means the emitted support is exactly inside the
    pool support.
    """
    if not records:
        return 0.0
    hp = np.array([r.head_pitch for r in records])
    hy = np.array([r.head_yaw for r in records])
    d = np.hypot(
        np.degrees(hp[:, None] - pool.pitch[None, :]),
        np.degrees(hy[:, None] - pool.yaw[None, :]),
    )
    return float(d.min(axis=1).max())
