"""Evaluation metrics: accuracy, F1, rank-based AUROC, fold aggregation.

All functions are pure; the positive class is label 1 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError, ValidationError


@dataclass
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class MetricSet:
    accuracy: float
    auroc: float
    f1: float


def _check_binary(name, values):
    arr = np.asarray(values)
    if arr.ndim != 1 or arr.size < 1:
        raise ValidationError(f"{name} must be a nonempty 1-D array")
    if not np.isin(arr, (0, 1)).all():
        raise ValidationError(f"{name} contains values outside {{0, 1}}")
    return arr.astype(int)


def confusion(y_true, y_pred) -> ConfusionCounts:
    t = _check_binary("y_true", y_true)
    p = _check_binary("y_pred", y_pred)
    if t.size != p.size:
        raise ValidationError(f"length mismatch: {t.size} labels vs {p.size} predictions")
    return ConfusionCounts(
        tp=int(((t == 1) & (p == 1)).sum()),
        tn=int(((t == 0) & (p == 0)).sum()),
        fp=int(((t == 0) & (p == 1)).sum()),
        fn=int(((t == 1) & (p == 0)).sum()),
    )


def accuracy(c: ConfusionCounts) -> float:
    return (c.tp + c.tn) / c.total


def f1_degenerate(c: ConfusionCounts) -> bool:
    """True when no positives exist and none were predicted (TP=FP=FN=0)."""
    return c.tp == 0 and c.fp == 0 and c.fn == 0


def f1(c: ConfusionCounts) -> float:
    """TP / (TP + (FP+FN)/2); 1.0 in the degenerate all-negative case.

    With no actual or predicted positives there are zero misclassifications
    of the positive class, so the score is vacuously perfect; reports carry
    a flag (see ``f1_degenerate``) so the case stays visible.
    """
    if f1_degenerate(c):
        return 1.0
    return c.tp / (c.tp + 0.5 * (c.fp + c.fn))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auroc(scores, y_true) -> float:
    """Mann-Whitney AUROC: P(random positive outscores random negative),
    ties counting one half (average ranks)."""
    labels = _check_binary("y_true", y_true)
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != labels.shape:
        raise ValidationError(f"length mismatch: {s.size} scores vs {labels.size} labels")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUROC undefined: {n_pos} positives and {n_neg} negatives"
        )
    ranks = _average_ranks(s)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_points(scores, y_true) -> list[tuple[float, float, float]]:
    """ROC staircase as (fpr, tpr, threshold) rows, thresholds descending.

    The first row is (0, 0, inf); one row is emitted after each distinct
    score value, so tied scores advance the curve in a single step.
    """
    labels = _check_binary("y_true", y_true)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"ROC undefined: {n_pos} positives and {n_neg} negatives"
        )
    order = np.argsort(-s, kind="stable")
    points = [(0.0, 0.0, float("inf"))]
    tp = fp = 0
    i = 0
    while i < order.size:
        threshold = s[order[i]]
        while i < order.size and s[order[i]] == threshold:
            if labels[order[i]] == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((fp / n_neg, tp / n_pos, float(threshold)))
    return points


def aggregate_folds(per_fold: list[MetricSet]) -> tuple[MetricSet, MetricSet]:
    """Arithmetic mean and population standard deviation across folds.

    Folds are the entire population of the experiment, hence the divide-by-k
    (not k-1) standard deviation.
    """
    if not per_fold:
        raise ValidationError("aggregate_folds needs at least one fold")

    def stats(field):
        vals = np.array([getattr(m, field) for m in per_fold], dtype=np.float64)
        return float(vals.mean()), float(vals.std())

    acc_m, acc_s = stats("accuracy")
    auc_m, auc_s = stats("auroc")
    f1_m, f1_s = stats("f1")
    return (
        MetricSet(accuracy=acc_m, auroc=auc_m, f1=f1_m),
        MetricSet(accuracy=acc_s, auroc=auc_s, f1=f1_s),
    )
