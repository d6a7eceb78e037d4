"""Accuracy, per-class precision/recall and macro-F1 from label vectors."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InputError


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    confusion: list[list[int]]
    per_domain_counts: dict[str, int] = field(default_factory=dict)
    absent_classes: list[int] = field(default_factory=list)
    n_samples: int = 0
    # samples a router could not place and sent to the fallback model
    fallback_count: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise InputError("label vectors differ in length")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def report_from_confusion(cm: np.ndarray, per_domain_counts: dict[str, int] | None = None) -> EvalReport:
    """Rows are true classes, columns predictions. 0/0 ratios count as 0."""
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise InputError("cannot evaluate an empty prediction set")
    tp = np.diag(cm).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    actual = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    absent = [int(c) for c in np.flatnonzero((actual == 0) & (predicted == 0))]
    return EvalReport(
        accuracy=float(tp.sum() / total),
        macro_f1=float(f1.mean()),
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        confusion=cm.tolist(),
        per_domain_counts=dict(per_domain_counts or {}),
        absent_classes=absent,
        n_samples=total,
    )


def evaluate_labels(y_true, y_pred, num_classes: int,
                    per_domain_counts: dict[str, int] | None = None) -> EvalReport:
    return report_from_confusion(confusion_matrix(y_true, y_pred, num_classes), per_domain_counts)


def macro_f1(y_true, y_pred, num_classes: int) -> float:
    return evaluate_labels(y_true, y_pred, num_classes).macro_f1
