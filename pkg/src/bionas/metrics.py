"""Classification quality metrics: accuracy, per-class precision/recall/F1, ROC.

Multi-class metrics use a one-vs-rest reduction of the confusion matrix.
Degenerate denominators (a class never predicted, or never present) yield 0
rather than an error, and the affected classes are listed on the report;
heavily imbalanced arrhythmia tasks legitimately produce 0% quality classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    """C x C count grid; rows are true classes, columns predicted classes."""

    counts: tuple[tuple[int, ...], ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.counts)
        if n == 0 or any(len(row) != n for row in self.counts):
            raise ValueError("confusion matrix must be square and non-empty")
        if any(v < 0 for row in self.counts for v in row):
            raise ValueError("confusion matrix entries must be non-negative")
        if self.labels and len(self.labels) != n:
            raise ValueError("label count must match matrix size")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(n)))

    @classmethod
    def from_predictions(cls, true_idx, pred_idx, labels) -> "ConfusionMatrix":
        n = len(labels)
        grid = [[0] * n for _ in range(n)]
        for t, p in zip(true_idx, pred_idx):
            grid[t][p] += 1
        return cls(tuple(tuple(row) for row in grid), tuple(labels))

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    @property
    def num_classes(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class RocCurve:
    label: str
    points: tuple[tuple[float, float, float], ...]  # (threshold, fpr, tpr)
    auc: float


@dataclass(frozen=True)
class QualityReport:
    """Accuracy plus one-vs-rest metrics per class, with optional ROC curves."""

    accuracy: float
    per_class: tuple[ClassMetrics, ...]
    roc: tuple[RocCurve, ...] = ()
    degenerate_classes: tuple[str, ...] = ()

    def scalar(self, metric: str = "accuracy", target_class: str | None = None) -> float:
        """Single quality number for the cost function."""
        if metric == "accuracy":
            return self.accuracy
        if metric not in ("precision", "recall", "f1"):
            raise ValueError(f"unknown quality metric {metric!r}")
        if target_class is None:
            raise ValueError(f"metric {metric!r} needs a target class")
        for entry in self.per_class:
            if entry.label == target_class:
                return getattr(entry, metric)
        raise ValueError(f"class {target_class!r} not in report")

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": [
                {"label": m.label, "precision": m.precision, "recall": m.recall, "f1": m.f1}
                for m in self.per_class
            ],
            "degenerate_classes": list(self.degenerate_classes),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "QualityReport":
        return cls(
            accuracy=float(data["accuracy"]),
            per_class=tuple(
                ClassMetrics(str(m["label"]), float(m["precision"]),
                             float(m["recall"]), float(m["f1"]))
                for m in data.get("per_class", ())
            ),
            degenerate_classes=tuple(data.get("degenerate_classes", ())),
        )


def accuracy(cm: ConfusionMatrix) -> float:
    """Correct classifications over total classifications."""
    total = cm.total
    if total == 0:
        raise ValueError("confusion matrix has no classifications")
    return sum(cm.counts[i][i] for i in range(cm.num_classes)) / total


def precision_recall_f1(cm: ConfusionMatrix, class_index: int) -> tuple[float, float, float]:
    """One-vs-rest precision, recall and F1 for one class; degenerate cases are 0."""
    if not 0 <= class_index < cm.num_classes:
        raise ValueError(f"class index {class_index} out of range")
    tp = cm.counts[class_index][class_index]
    fp = sum(cm.counts[r][class_index] for r in range(cm.num_classes)) - tp
    fn = sum(cm.counts[class_index]) - tp
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def report_from_confusion(cm: ConfusionMatrix, roc: tuple[RocCurve, ...] = ()) -> QualityReport:
    per_class = []
    degenerate = []
    for i, label in enumerate(cm.labels):
        p, r, f1 = precision_recall_f1(cm, i)
        per_class.append(ClassMetrics(label, p, r, f1))
        row = sum(cm.counts[i])
        col = sum(cm.counts[r][i] for r in range(cm.num_classes))
        if row == 0 or col == 0:
            degenerate.append(label)
    return QualityReport(
        accuracy=accuracy(cm),
        per_class=tuple(per_class),
        roc=roc,
        degenerate_classes=tuple(degenerate),
    )


def roc_curve(scores, labels, class_label: str = "positive") -> RocCurve:
    """Threshold sweep ROC for binary labels, with trapezoidal AUC.

    ``labels`` are truthy for positives. Points run from (0, 0) at threshold
    +inf to (1, 1), adding one point per distinct score in descending order.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative label")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    points = [(float("inf"), 0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = scores.size
    while i < n:
        threshold = sorted_scores[i]
        while i < n and sorted_scores[i] == threshold:
            if sorted_labels[i]:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((float(threshold), fp / n_neg, tp / n_pos))
    # The final point is (1, 1) by construction: all samples are above the
    # lowest threshold.

    auc = 0.0
    for (_, fpr0, tpr0), (_, fpr1, tpr1) in zip(points, points[1:]):
        auc += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0
    return RocCurve(class_label, tuple(points), auc)


def metrics_csv(report: QualityReport) -> str:
    """Metrics table: an accuracy row, then class,precision,recall,f1 rows."""
    lines = [f"accuracy,{report.accuracy!r}", "class,precision,recall,f1"]
    for m in report.per_class:
        lines.append(f"{m.label},{m.precision!r},{m.recall!r},{m.f1!r}")
    return "\n".join(lines) + "\n"


def roc_csv(curves) -> str:
    lines = ["class,threshold,fpr,tpr"]
    for curve in curves:
        for threshold, fpr, tpr in curve.points:
            t = "inf" if threshold == float("inf") else repr(threshold)
            lines.append(f"{curve.label},{t},{fpr!r},{tpr!r}")
    return "\n".join(lines) + "\n"
