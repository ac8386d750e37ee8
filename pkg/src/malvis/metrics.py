"""Confusion matrix, accuracy / precision / recall / F1, and rank-based AUC.

Per-class metrics use the one-vs-rest reduction.  Degenerate 0/0 cases
(a class with no true and no predicted samples) are defined as 0 and
flagged per class.  AUC is the Mann-Whitney rank statistic: the
probability that a random positive scores above a random negative,
ties counted half.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError


@dataclass
class ConfusionMatrix:
    """C x C counts; rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise UsageError("confusion matrix must be square")
        if (self.counts < 0).any():
            raise UsageError("confusion counts must be nonnegative")

    @property
    def n_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["true\\pred"] + list(range(self.n_classes)))
            for i, row in enumerate(self.counts):
                writer.writerow([i] + [int(v) for v in row])


def confusion(true_labels, pred_labels, n_classes):
    """Count (true, predicted) pairs into a C x C matrix."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(pred_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise UsageError("label sequences must have equal length")
    if t.size and (t.min() < 0 or t.max() >= n_classes or p.min() < 0 or p.max() >= n_classes):
        raise UsageError(f"labels must lie in [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


@dataclass
class EvalReport:
    """Per-class and aggregate metrics for one evaluation run."""

    accuracy: float
    per_class: list  # dicts: class, precision, recall, f1, support, degenerate
    macro: dict
    weighted: dict
    confusion: ConfusionMatrix
    auc: float = None

    def to_dict(self):
        d = {
            "accuracy": self.accuracy,
            "per_class": self.per_class,
            "macro": self.macro,
            "weighted": self.weighted,
            "confusion": self.confusion.counts.tolist(),
        }
        if self.auc is not None:
            d["auc"] = self.auc
        return d

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as f:
                f.write(text + "\n")
        return text

    def to_text_table(self):
        """Aligned table mirroring the headline metric columns."""
        lines = []
        header = f"{'':>10}  {'Accuracy':>9} {'Precision':>9} {'Recall':>9} {'F1-Score':>9}"
        lines.append(header)
        lines.append(
            f"{'macro':>10}  {self.accuracy:>9.4f} {self.macro['precision']:>9.4f} "
            f"{self.macro['recall']:>9.4f} {self.macro['f1']:>9.4f}"
        )
        lines.append(
            f"{'weighted':>10}  {self.accuracy:>9.4f} {self.weighted['precision']:>9.4f} "
            f"{self.weighted['recall']:>9.4f} {self.weighted['f1']:>9.4f}"
        )
        if self.auc is not None:
            lines.append(f"{'auc':>10}  {self.auc:>9.4f}")
        lines.append("")
        lines.append(f"{'class':>10}  {'support':>9} {'Precision':>9} {'Recall':>9} {'F1-Score':>9}")
        for row in self.per_class:
            lines.append(
                f"{row['class']:>10}  {row['support']:>9} {row['precision']:>9.4f} "
                f"{row['recall']:>9.4f} {row['f1']:>9.4f}"
            )
        return "\n".join(lines) + "\n"


def classification_metrics(cm: ConfusionMatrix, auc=None):
    """Per-class one-vs-rest precision/recall/F1 plus macro and weighted means."""
    counts = cm.counts
    total = cm.total
    if total == 0:
        raise UsageError("cannot score an empty confusion matrix")
    per_class = []
    for c in range(cm.n_classes):
        tp = int(counts[c, c])
        fp = int(counts[:, c].sum()) - tp
        fn = int(counts[c, :].sum()) - tp
        degenerate = False
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn > 0 else 0.0
        if tp + fp == 0 or tp + fn == 0 or 2 * tp + fp + fn == 0:
            degenerate = True
        per_class.append(
            {
                "class": c,
                "precision": precision,
                "recall": recall,
                "f1": f1,
                "support": tp + fn,
                "degenerate": degenerate,
            }
        )
    accuracy = float(np.trace(counts)) / total
    supports = np.array([row["support"] for row in per_class], dtype=np.float64)

    def aggregate(weights):
        w = weights / weights.sum()
        return {
            key: float(np.sum(w * np.array([row[key] for row in per_class])))
            for key in ("precision", "recall", "f1")
        }

    macro = aggregate(np.ones(cm.n_classes))
    weighted = aggregate(supports) if supports.sum() > 0 else macro
    return EvalReport(
        accuracy=accuracy,
        per_class=per_class,
        macro=macro,
        weighted=weighted,
        confusion=cm,
        auc=auc,
    )


def roc_auc(scores, binary_labels):
    """AUC by rank statistic; ties between classes count half a pair."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(binary_labels)
    if s.shape != y.shape or s.ndim != 1:
        raise UsageError("scores and labels must be equal-length vectors")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise UsageError("AUC needs both classes present")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = float(np.sum(ranks[y == 1]))
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)
