"""Accuracy, macro-F1 and confusion-matrix reports over 1-based labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvalError, LabelError


def _check(preds, golds):
    preds = np.asarray(preds, dtype=np.int64)
    golds = np.asarray(golds, dtype=np.int64)
    if preds.shape != golds.shape or preds.ndim != 1:
        raise EvalError(f"preds {preds.shape} and golds {golds.shape} must be equal-length 1-D")
    if preds.size == 0:
        raise EvalError("no samples to evaluate")
    return preds, golds


def accuracy(preds, golds) -> float:
    preds, golds = _check(preds, golds)
    return float(np.count_nonzero(preds == golds)) / preds.size


def confusion_matrix(preds, golds, num_classes: int) -> np.ndarray:
    """Counts indexed [gold - 1, pred - 1]."""
    preds, golds = _check(preds, golds)
    for name, arr in (("pred", preds), ("gold", golds)):
        if arr.min() < 1 or arr.max() > num_classes:
            raise LabelError(f"{name} labels outside [1, {num_classes}]")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (golds - 1, preds - 1), 1)
    return cm


def per_class_scores(cm: np.ndarray):
    """Precision, recall and F1 per class; 0 wherever a denominator is 0.

    ``cm`` may carry leading batch axes: (..., K, K).
    """
    cm = np.asarray(cm)
    tp = np.diagonal(cm, axis1=-2, axis2=-1).astype(float)
    pred_tot = cm.sum(axis=-2).astype(float)
    gold_tot = cm.sum(axis=-1).astype(float)
    precision = np.divide(tp, pred_tot, out=np.zeros_like(tp), where=pred_tot > 0)
    recall = np.divide(tp, gold_tot, out=np.zeros_like(tp), where=gold_tot > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1


def macro_f1(preds, golds, num_classes: int) -> float:
    """Unweighted mean of per-class F1; classes never seen count as 0."""
    _, _, f1 = per_class_scores(confusion_matrix(preds, golds, num_classes))
    return float(f1.mean())


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    confusion: np.ndarray

    @property
    def total(self) -> int:
        return int(self.confusion.sum())


def evaluate_predictions(preds, golds, num_classes: int) -> EvalReport:
    cm = confusion_matrix(preds, golds, num_classes)
    precision, recall, f1 = per_class_scores(cm)
    return EvalReport(
        accuracy=int(np.trace(cm)) / int(cm.sum()),
        macro_f1=float(f1.mean()),
        precision=precision,
        recall=recall,
        f1=f1,
        confusion=cm,
    )
