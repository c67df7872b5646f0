"""Confusion-matrix metrics, ROC/AUC, and the Dice overlap coefficient.

Positive means "lesion present". Ratios with a zero denominator evaluate to
0.0 and the affected field name is recorded in the report's degenerate list
instead of raising, so parameter sweeps never abort on a lopsided split.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import BagLabel, RegionMask
from .errors import DegenerateLabels, LengthMismatch, ShapeMismatch


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class RocCurve:
    """Operating points sorted by false-positive rate, anchored at (0, 0)
    and (1, 1), with the trapezoidal area under them."""

    points: tuple[tuple[float, float], ...]
    auc: float
    thresholds: tuple[float, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class MetricsReport:
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    accuracy: float
    roc: RocCurve | None = None
    degenerate: tuple[str, ...] = ()


def confusion(
    predictions: list[BagLabel], truths: list[BagLabel]
) -> ConfusionCounts:
    """Count the four outcomes; positive is the lesion class."""
    if len(predictions) != len(truths):
        raise LengthMismatch(
            f"{len(predictions)} predictions vs {len(truths)} truths"
        )
    if not truths:
        raise LengthMismatch("need at least one prediction/truth pair")
    tp = fp = fn = tn = 0
    for pred, truth in zip(predictions, truths):
        if truth is BagLabel.POSITIVE:
            if pred is BagLabel.POSITIVE:
                tp += 1
            else:
                fn += 1
        else:
            if pred is BagLabel.POSITIVE:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def _ratio(num: int, den: int, name: str, degenerate: list[str]) -> float:
    if den == 0:
        degenerate.append(name)
        return 0.0
    return num / den


def derive_metrics(counts: ConfusionCounts, roc: RocCurve | None = None) -> MetricsReport:
    """Precision, recall, F1 (their harmonic mean), and accuracy."""
    degenerate: list[str] = []
    precision = _ratio(counts.tp, counts.tp + counts.fp, "precision", degenerate)
    recall = _ratio(counts.tp, counts.tp + counts.fn, "recall", degenerate)
    if precision + recall == 0.0:
        degenerate.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * recall * precision / (recall + precision)
    accuracy = _ratio(counts.tp + counts.tn, counts.total, "accuracy", degenerate)
    return MetricsReport(
        counts, precision, recall, f1, accuracy, roc, tuple(degenerate)
    )


def roc_auc(scores, truths: list[BagLabel]) -> RocCurve:
    """ROC curve from continuous scores, sweeping thresholds over the
    distinct score values in descending order; tied scores move together.

    The area is accumulated from integer counts and divided once at the end,
    so it matches the pairwise Mann-Whitney statistic exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if len(scores) != len(truths):
        raise LengthMismatch(f"{len(scores)} scores vs {len(truths)} truths")
    labels = np.array([t is BagLabel.POSITIVE for t in truths], dtype=bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(
            f"ROC needs both classes, got {n_pos} positive / {n_neg} negative"
        )

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    points: list[tuple[float, float]] = [(0.0, 0.0)]
    thresholds: list[float] = [float("inf")]
    area_twice = 0  # accumulates 2 * auc * n_pos * n_neg, exactly, in ints
    tp = fp = 0
    i = 0
    n = len(sorted_scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        group_tp = int(sorted_labels[i:j].sum())
        group_fp = (j - i) - group_tp
        area_twice += group_fp * (2 * tp + group_tp)
        tp += group_tp
        fp += group_fp
        points.append((fp / n_neg, tp / n_pos))
        thresholds.append(float(sorted_scores[i]))
        i = j

    auc = area_twice / (2 * n_pos * n_neg)
    return RocCurve(tuple(points), auc, tuple(thresholds))


def dice(mask_a: RegionMask | np.ndarray, mask_b: RegionMask | np.ndarray) -> float:
    """2|A & B| / (|A| + |B|); two empty masks count as a perfect 1.0."""
    a = mask_a.pixels if isinstance(mask_a, RegionMask) else np.asarray(mask_a, bool)
    b = mask_b.pixels if isinstance(mask_b, RegionMask) else np.asarray(mask_b, bool)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / total
