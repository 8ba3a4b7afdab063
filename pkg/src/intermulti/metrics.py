"""Sentiment-intensity and emotion-classification metrics.

Conventions:

* Acc-7 rounds predictions and labels to the nearest integer (half to even)
  and clamps both into [-3, 3].
* Acc-2 / F1 "non-negative": positive class is value >= 0, all samples kept.
* Acc-2 / F1 "positive": samples with label exactly 0 are dropped, positive
  class is value > 0.
* F1 is the harmonic mean of precision and recall on the positive class. If
  neither labels nor predictions contain a positive, F1 is 1.0.
* Pearson r of a constant input is undefined and reported as None.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class MetricReport:
    n: int
    mae: float | None = None
    corr: float | None = None
    acc2_nonneg: float | None = None
    f1_nonneg: float | None = None
    acc2_pos: float | None = None
    f1_pos: float | None = None
    acc7: float | None = None
    accuracy: float | None = None
    per_class: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_class"] = {str(k): v for k, v in self.per_class.items()}
        return d


def confusion(truth: np.ndarray, pred: np.ndarray) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) for boolean arrays."""
    truth = np.asarray(truth, dtype=bool)
    pred = np.asarray(pred, dtype=bool)
    tp = int(np.sum(truth & pred))
    fp = int(np.sum(~truth & pred))
    fn = int(np.sum(truth & ~pred))
    tn = int(np.sum(~truth & ~pred))
    return tp, fp, fn, tn


def f1_score(truth, pred) -> float:
    tp, fp, fn, _ = confusion(truth, pred)
    if tp + fp + fn == 0:
        return 1.0
    # 2PR/(P+R) simplifies to this and avoids 0/0 when one of P, R is undefined
    return 2.0 * tp / (2.0 * tp + fp + fn)


def binary_accuracy(truth, pred) -> float:
    truth = np.asarray(truth, dtype=bool)
    return float(np.mean(truth == np.asarray(pred, dtype=bool)))


def pearson(x, y) -> float | None:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx, dy = x - x.mean(), y - y.mean()
    denom = np.sqrt(np.sum(dx * dx) * np.sum(dy * dy))
    if denom == 0.0:
        return None
    return float(np.clip(np.sum(dx * dy) / denom, -1.0, 1.0))


def seven_class(values) -> np.ndarray:
    return np.clip(np.round(np.asarray(values, dtype=np.float64)), -3, 3).astype(np.int64)


def regression_metrics(preds, labels) -> MetricReport:
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if preds.shape != labels.shape:
        raise ValueError(f"metrics: {preds.size} predictions for {labels.size} labels")
    if preds.size == 0:
        raise ValueError("metrics: empty input")
    report = MetricReport(n=int(preds.size))
    report.mae = float(np.mean(np.abs(preds - labels)))
    report.corr = pearson(preds, labels)
    report.acc7 = float(np.mean(seven_class(preds) == seven_class(labels)))
    report.acc2_nonneg = binary_accuracy(labels >= 0, preds >= 0)
    report.f1_nonneg = f1_score(labels >= 0, preds >= 0)
    nonzero = labels != 0
    if nonzero.any():
        report.acc2_pos = binary_accuracy(labels[nonzero] > 0, preds[nonzero] > 0)
        report.f1_pos = f1_score(labels[nonzero] > 0, preds[nonzero] > 0)
    return report


def classification_metrics(logits, labels) -> MetricReport:
    """One-vs-rest Acc-2 and F1 per class, plus overall accuracy."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != labels.size:
        raise ValueError(f"metrics: logits {logits.shape} do not match {labels.size} labels")
    if labels.size == 0:
        raise ValueError("metrics: empty input")
    pred = np.argmax(logits, axis=1)
    report = MetricReport(n=int(labels.size), accuracy=float(np.mean(pred == labels)))
    for k in range(logits.shape[1]):
        report.per_class[k] = {
            "acc2": binary_accuracy(labels == k, pred == k),
            "f1": f1_score(labels == k, pred == k),
        }
    return report


def metrics(preds, labels, task: str) -> MetricReport:
    if task == "regression":
        return regression_metrics(preds, labels)
    if task == "classification":
        return classification_metrics(preds, labels)
    raise ValueError(f"metrics: unknown task {task!r}")
