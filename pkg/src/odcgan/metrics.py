"""Pixel confusion counts and the five overlap/accuracy metrics."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

METRIC_NAMES = ("accuracy", "dice", "jaccard", "sensitivity", "specificity")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    dice: float
    jaccard: float
    sensitivity: float
    specificity: float
    n_images: int = 1

    def values(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRIC_NAMES}


def _as_binary(a, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype != bool:
        if not np.isin(a, (0, 1)).all():
            raise ValueError(f"{name} mask is not binary")
        a = a.astype(bool)
    return a


def confusion(pred, gt) -> ConfusionCounts:
    p = _as_binary(pred, "predicted")
    g = _as_binary(gt, "ground-truth")
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, p.size - tp - fp - fn, fp, fn)


def _ratio(num: int, den: int, both_empty: bool) -> float:
    # 0/0 happens only when the quantity is vacuous; score 1 if the
    # prediction is vacuous too
    if den == 0:
        return 1.0 if both_empty else 0.0
    return num / den


def metrics_from_counts(c: ConfusionCounts) -> MetricsReport:
    tp, tn, fp, fn = c.tp, c.tn, c.fp, c.fn
    return MetricsReport(
        accuracy=_ratio(tp + tn, c.total, True),
        dice=_ratio(2 * tp, 2 * tp + fp + fn, True),
        jaccard=_ratio(tp, tp + fp + fn, True),
        sensitivity=_ratio(tp, tp + fn, fp == 0),
        specificity=_ratio(tn, tn + fp, fn == 0),
        n_images=1,
    )


def aggregate(reports) -> MetricsReport:
    """Unweighted mean of per-image reports."""
    reports = list(reports)
    if not reports:
        raise ValueError("cannot aggregate zero reports")
    n = sum(r.n_images for r in reports)
    means = {k: float(np.mean([getattr(r, k) for r in reports])) for k in METRIC_NAMES}
    return MetricsReport(**means, n_images=n)


def write_metrics_csv(path, per_image: dict[str, MetricsReport], summary: MetricsReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("id",) + METRIC_NAMES)
        for id_, r in per_image.items():
            w.writerow([id_] + [f"{getattr(r, k):.6f}" for k in METRIC_NAMES])
        w.writerow(["mean"] + [f"{getattr(summary, k):.6f}" for k in METRIC_NAMES])


def read_metrics_csv(path) -> dict[str, dict[str, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["id"]: {k: float(row[k]) for k in METRIC_NAMES} for row in csv.DictReader(fh)}


def format_table(per_image: dict[str, MetricsReport], summary: MetricsReport) -> str:
    head = f"{'id':<20}" + "".join(f"{k:>13}" for k in METRIC_NAMES)
    lines = [head, "-" * len(head)]
    for id_, r in per_image.items():
        lines.append(f"{id_:<20}" + "".join(f"{getattr(r, k):>13.4f}" for k in METRIC_NAMES))
    lines.append("-" * len(head))
    lines.append(f"{'mean (n=%d)' % summary.n_images:<20}"
                 + "".join(f"{getattr(summary, k):>13.4f}" for k in METRIC_NAMES))
    return "\n".join(lines)


def report_dict(r: MetricsReport) -> dict:
    return asdict(r)
