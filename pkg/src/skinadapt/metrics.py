"""Segmentation metrics and the smoothed Dice objective.

Notation: ``q`` is a binary prediction, ``p`` a probability vector, ``g`` the
binary ground truth, all flattened over the pixels of one image.

Degenerate denominators: when prediction and ground truth are both empty the
ratios (prec, rec, iou, f1) are 1; when only one is empty the affected ratios
are 0.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_SMOOTHNESS = 1e-5
CSV_FIELDS = ("id", "acc", "iou", "prec", "rec", "f1", "tp", "fp", "fn", "tn")


@dataclass(frozen=True)
class LossConfig:
    smoothness: float = DEFAULT_SMOOTHNESS

    def __post_init__(self):
        if not self.smoothness > 0:
            raise ValueError(f"smoothness must be > 0, got {self.smoothness}")


@dataclass(frozen=True)
class MetricReport:
    acc: float
    iou: float
    prec: float
    rec: float
    f1: float
    pixel_count: int
    tp: int
    fp: int
    fn: int
    tn: int
    id: str = ""

    def csv_row(self) -> list:
        return [self.id] + [repr(float(getattr(self, k))) for k in CSV_FIELDS[1:6]] + [
            int(getattr(self, k)) for k in CSV_FIELDS[6:]
        ]

    @classmethod
    def from_csv_row(cls, row: Sequence) -> "MetricReport":
        ident, acc, iou, prec, rec, f1, tp, fp, fn, tn = row
        tp, fp, fn, tn = int(tp), int(fp), int(fn), int(tn)
        return cls(float(acc), float(iou), float(prec), float(rec), float(f1),
                   tp + fp + fn + tn, tp, fp, fn, tn, ident)

    def as_dict(self) -> dict:
        return asdict(self)


def _ratio(num: int, den: int, both_empty: bool) -> float:
    if den == 0:
        return 1.0 if both_empty else 0.0
    return num / den


def report_from_counts(tp: int, fp: int, fn: int, tn: int, ident: str = "") -> MetricReport:
    tp, fp, fn, tn = int(tp), int(fp), int(fn), int(tn)
    total = tp + fp + fn + tn
    if total == 0:
        raise ValueError("cannot score an empty pixel set")
    both_empty = tp + fp == 0 and tp + fn == 0
    return MetricReport(
        acc=(tp + tn) / total,
        iou=_ratio(tp, tp + fp + fn, both_empty),
        prec=_ratio(tp, tp + fp, both_empty),
        rec=_ratio(tp, tp + fn, both_empty),
        f1=_ratio(2 * tp, 2 * tp + fp + fn, both_empty),
        pixel_count=total,
        tp=tp, fp=fp, fn=fn, tn=tn, id=ident,
    )


def confusion_counts(q, g) -> tuple[int, int, int, int]:
    q = np.asarray(q).ravel()
    g = np.asarray(g).ravel()
    if q.shape != g.shape:
        raise ValueError(f"length mismatch: {q.size} predictions vs {g.size} labels")
    q = q.astype(bool)
    g = g.astype(bool)
    tp = int(np.count_nonzero(q & g))
    fp = int(np.count_nonzero(q & ~g))
    fn = int(np.count_nonzero(~q & g))
    return tp, fp, fn, q.size - tp - fp - fn


def compute_metrics(q, g, ident: str = "") -> MetricReport:
    """Acc, IoU, precision, recall and F1 of a binary prediction ``q`` against ``g``."""
    q_arr, g_arr = np.asarray(q), np.asarray(g)
    for name, arr in (("q", q_arr), ("g", g_arr)):
        if arr.size and not ((arr == 0) | (arr == 1)).all():
            raise ValueError(f"{name} must be binary")
    return report_from_counts(*confusion_counts(q_arr, g_arr), ident=ident)


def f1_from_iou(iou: float) -> float:
    return 2.0 * iou / (1.0 + iou)


def iou_from_f1(f1: float) -> float:
    return f1 / (2.0 - f1)


def _pair(p, g):
    p = np.asarray(p, dtype=np.float64).ravel()
    g = np.asarray(g, dtype=np.float64).ravel()
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: {p.size} vs {g.size}")
    return p, g


def soft_dice_coef(p, g, cfg: LossConfig = LossConfig()) -> float:
    """(s + 2 p.g) / (s + |p| + |g|)."""
    p, g = _pair(p, g)
    s = cfg.smoothness
    return float((s + 2.0 * p.dot(g)) / (s + p.sum() + g.sum()))


def dice_loss(p, g, cfg: LossConfig = LossConfig()) -> float:
    return 1.0 - soft_dice_coef(p, g, cfg)


def dice_loss_grad(p, g, cfg: LossConfig = LossConfig()) -> np.ndarray:
    """Analytic gradient of :func:`dice_loss` with respect to ``p``."""
    p, g = _pair(p, g)
    s = cfg.smoothness
    den = s + p.sum() + g.sum()
    num = s + 2.0 * p.dot(g)
    return -(2.0 * g * den - num) / (den * den)


def aggregate_report(reports: Iterable[MetricReport], mode: str = "per_image_mean") -> MetricReport:
    """Combine per-image reports.

    ``per_image_mean`` averages every ratio over images (the "mean F1" used
    in result tables); ``pixel_pooled`` sums the confusion counts first.
    Confusion counts are summed in both modes.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("cannot aggregate an empty set of reports")
    if mode not in ("per_image_mean", "pixel_pooled"):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    if len(reports) == 1:
        return reports[0]
    tp = sum(r.tp for r in reports)
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    tn = sum(r.tn for r in reports)
    if mode == "pixel_pooled":
        return report_from_counts(tp, fp, fn, tn, ident="pooled")

    def mean(name):
        return float(np.mean([getattr(r, name) for r in reports]))

    return MetricReport(
        acc=mean("acc"), iou=mean("iou"), prec=mean("prec"), rec=mean("rec"), f1=mean("f1"),
        pixel_count=tp + fp + fn + tn, tp=tp, fp=fp, fn=fn, tn=tn, id="mean",
    )


def threshold(p, tau: float = 0.5) -> np.ndarray:
    return (np.asarray(p) >= tau).astype(np.uint8)


def score_prediction(prob, g, ident: str = "", tau: float = 0.5) -> MetricReport:
    return compute_metrics(threshold(prob, tau), g, ident=ident)

