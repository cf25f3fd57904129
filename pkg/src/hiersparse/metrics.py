"""Classification metrics for the positive (label 1) class."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricsReport:
    f1: float
    precision: float
    recall: float
    threshold: float
    confusion: tuple[int, int, int, int]  # (tp, fp, tn, fn)
    auc: float | None = None
    roc_points: list[tuple[float, float]] = field(default_factory=list, repr=False)
    # Set when recall is undefined because no positive label was present.
    recall_undefined: bool = False

    def to_dict(self) -> dict:
        tp, fp, tn, fn = self.confusion
        return {
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "auc": self.auc,
            "threshold": self.threshold,
            "confusion": {"tp": tp, "fp": fp, "tn": tn, "fn": fn},
        }


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"length mismatch: {s.size} scores, {y.size} labels")
    if y.size and not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return s, y.astype(np.int64)


def classify_metrics(scores, labels, threshold: float = 0.5) -> MetricsReport:
    """Precision, recall and F1 of ``score >= threshold`` predictions.

    Undefined ratios (no predicted positives, or no actual positives) are 0.
    """
    s, y = _check(scores, labels)
    pred = s >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(
        f1, precision, recall, threshold, (tp, fp, tn, fn), recall_undefined=(tp + fn == 0)
    )


def _two_class(y: np.ndarray) -> tuple[int, int]:
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC/ROC need both classes present")
    return n_pos, n_neg


def auc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic.

    Tied scores count one half. Computed with doubled average ranks so the
    rank sum stays an exact integer; the only rounding is the final division.
    """
    s, y = _check(scores, labels)
    n_pos, n_neg = _two_class(y)
    order = np.argsort(s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    # Tie blocks [lo, hi) over sorted positions hold 1-based ranks lo+1..hi.
    bounds = np.flatnonzero(np.diff(s_sorted)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [s.size]])
    pos_in_block = np.add.reduceat(y_sorted, starts)
    doubled_rank_sum = sum(int(p) * int(lo + 1 + hi) for p, lo, hi in zip(pos_in_block, starts, ends))
    doubled_u = doubled_rank_sum - n_pos * (n_pos + 1)
    return doubled_u / (2 * n_pos * n_neg)


def roc_curve(scores, labels) -> list[tuple[float, float]]:
    """(fpr, tpr) at each distinct score threshold, descending, with both endpoints."""
    s, y = _check(scores, labels)
    n_pos, n_neg = _two_class(y)
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    tps = np.cumsum(y_sorted)
    fps = np.cumsum(1 - y_sorted)
    last_of_block = np.concatenate([np.flatnonzero(np.diff(s_sorted)), [s.size - 1]])
    points = [(0.0, 0.0)]
    for i in last_of_block:
        points.append((fps[i] / n_neg, tps[i] / n_pos))
    return points


def trapezoid_area(points) -> float:
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return float(np.sum((xs[1:] - xs[:-1]) * (ys[1:] + ys[:-1]) / 2.0))


def evaluate(scores, labels, threshold: float = 0.5) -> MetricsReport:
    """Threshold metrics plus AUC and ROC (when both classes are present)."""
    report = classify_metrics(scores, labels, threshold)
    y = np.asarray(labels)
    if 0 < y.sum() < y.size:
        report.auc = auc(scores, labels)
        report.roc_points = roc_curve(scores, labels)
    return report
