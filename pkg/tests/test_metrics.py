import itertools

import numpy as np
import pytest

from lesionmil.data import BagLabel
from lesionmil.errors import DegenerateLabels, LengthMismatch, ShapeMismatch
from lesionmil.metrics import (
    ConfusionCounts,
    confusion,
    derive_metrics,
    dice,
    roc_auc,
)

P, N = BagLabel.POSITIVE, BagLabel.NEGATIVE


def mann_whitney(scores, truths):
    """Pairwise oracle: P(score+ > score-) + 0.5 P(score+ = score-)."""
    pos = [s for s, t in zip(scores, truths) if t is P]
    neg = [s for s, t in zip(scores, truths) if t is N]
    greater = sum(1 for a, b in itertools.product(pos, neg) if a > b)
    equal = sum(1 for a, b in itertools.product(pos, neg) if a == b)
    return (2 * greater + equal) / (2 * len(pos) * len(neg))


def test_confusion_simple():
    counts = confusion([P, N], [P, N])
    assert (counts.tp, counts.fp, counts.fn, counts.tn) == (1, 0, 0, 1)


def test_confusion_all_wrong():
    counts = confusion([P] * 4, [N] * 4)
    assert (counts.tp, counts.fp, counts.fn, counts.tn) == (0, 4, 0, 0)


def test_confusion_length_mismatch():
    with pytest.raises(LengthMismatch):
        confusion([P], [P, N])
    with pytest.raises(LengthMismatch):
        confusion([], [])


def test_derive_metrics_reference_row():
    report = derive_metrics(ConfusionCounts(114, 2, 8, 128))
    assert abs(report.precision - 0.9828) < 5e-5
    assert abs(report.recall - 0.9344) < 5e-5
    assert abs(report.f1 - 0.9580) < 5e-5
    assert abs(report.accuracy - 0.9603) < 5e-5
    assert report.degenerate == ()


def test_derive_metrics_degenerate_counts():
    report = derive_metrics(ConfusionCounts(0, 0, 0, 10))
    assert report.precision == 0.0
    assert report.recall == 0.0
    assert report.f1 == 0.0
    assert report.accuracy == 1.0
    assert set(report.degenerate) == {"precision", "recall", "f1"}


def test_derive_metrics_symmetric_counts():
    report = derive_metrics(ConfusionCounts(5, 5, 5, 5))
    assert report.precision == report.recall == report.f1 == report.accuracy == 0.5


def test_f1_between_precision_and_recall():
    rng = np.random.default_rng(1)
    for _ in range(100):
        tp, fp, fn, tn = (int(v) for v in rng.integers(0, 40, size=4))
        report = derive_metrics(ConfusionCounts(tp, fp, fn, tn))
        if "f1" in report.degenerate or "precision" in report.degenerate \
                or "recall" in report.degenerate:
            continue
        assert min(report.precision, report.recall) - 1e-12 <= report.f1
        assert report.f1 <= max(report.precision, report.recall) + 1e-12


def test_confusion_permutation_invariant():
    rng = np.random.default_rng(2)
    preds = [P if v else N for v in rng.integers(0, 2, 30)]
    truths = [P if v else N for v in rng.integers(0, 2, 30)]
    base = derive_metrics(confusion(preds, truths))
    perm = rng.permutation(30)
    shuffled = derive_metrics(
        confusion([preds[i] for i in perm], [truths[i] for i in perm])
    )
    assert base == shuffled


def test_roc_perfect_and_flipped():
    scores = [0.9, 0.8, 0.1, 0.2]
    truths = [P, P, N, N]
    assert roc_auc(scores, truths).auc == 1.0
    assert roc_auc(scores, [N, N, P, P]).auc == 0.0


def test_roc_single_tied_pair():
    curve = roc_auc([0.8, 0.8], [P, N])
    assert curve.auc == 0.5


def test_roc_curve_anchors_and_monotonicity():
    rng = np.random.default_rng(3)
    scores = rng.random(50)
    truths = [P if v else N for v in rng.integers(0, 2, 50)]
    if all(t is P for t in truths) or all(t is N for t in truths):
        truths[0] = P
        truths[1] = N
    curve = roc_auc(scores, truths)
    assert curve.points[0] == (0.0, 0.0)
    assert curve.points[-1] == (1.0, 1.0)
    fprs = [p[0] for p in curve.points]
    tprs = [p[1] for p in curve.points]
    assert fprs == sorted(fprs)
    assert tprs == sorted(tprs)


def test_roc_auc_equals_trapezoid_of_points():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = int(rng.integers(4, 120))
        scores = np.round(rng.random(n), 2)  # rounding forces ties
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        truths = [P if v else N for v in labels]
        curve = roc_auc(scores, truths)
        area = sum(
            (x2 - x1) * (y1 + y2) / 2
            for (x1, y1), (x2, y2) in zip(curve.points, curve.points[1:])
        )
        assert abs(curve.auc - area) <= 1e-12


def test_roc_matches_mann_whitney():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(4, 150))
        scores = np.round(rng.random(n), 1)
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        truths = [P if v else N for v in labels]
        assert abs(roc_auc(scores, truths).auc - mann_whitney(scores, truths)) <= 1e-12


def test_roc_invariant_under_increasing_transform():
    rng = np.random.default_rng(6)
    scores = rng.random(60)
    labels = rng.integers(0, 2, 60)
    labels[0], labels[1] = 0, 1
    truths = [P if v else N for v in labels]
    base = roc_auc(scores, truths).auc
    transformed = roc_auc(np.exp(3 * scores) + 7, truths).auc
    assert abs(base - transformed) <= 1e-12


def test_roc_degenerate_labels():
    with pytest.raises(DegenerateLabels):
        roc_auc([0.1, 0.2], [P, P])


def test_dice_identical_disjoint_partial():
    a = np.zeros((10, 10), dtype=bool)
    a[:5] = True
    assert dice(a, a) == 1.0
    b = ~a
    assert dice(a, b) == 0.0
    left = np.zeros(300, dtype=bool)
    left[:100] = True
    right = np.zeros(300, dtype=bool)
    right[60:120] = True  # |A|=100, |B|=60, overlap 40
    assert dice(left.reshape(15, 20), right.reshape(15, 20)) == 0.5


def test_dice_both_empty_is_one():
    empty = np.zeros((4, 4), dtype=bool)
    assert dice(empty, empty) == 1.0


def test_dice_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        dice(np.zeros((4, 4), dtype=bool), np.zeros((5, 4), dtype=bool))
