"""AUC, macro-F1 and accuracy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .dataset import CategoricalSeries


@dataclass(frozen=True)
class ScoredPredictions:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).ravel()
        y = np.asarray(self.labels).ravel()
        if s.shape != y.shape:
            raise ValueError("scores and labels differ in length")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be binary 0/1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y.astype(np.int64))


def auc(scores, labels=None) -> float:
    """Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly, ties count 1/2."""
    sp = scores if isinstance(scores, ScoredPredictions) else ScoredPredictions(scores, labels)
    pos = sp.labels == 1
    n_pos = int(pos.sum())
    n_neg = sp.labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(sp.scores)  # average ranks give the 1/2 tie credit
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _codes(x) -> np.ndarray:
    return x.codes if isinstance(x, CategoricalSeries) else np.asarray(x, dtype=np.int64)


def per_class_f1(pred, truth, n_classes: int | None = None) -> np.ndarray:
    p, t = _codes(pred), _codes(truth)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    if n_classes is None:
        n_classes = int(max(p.max(initial=0), t.max(initial=0))) + 1
    tp = np.bincount(t[p == t], minlength=n_classes).astype(np.float64)
    n_pred = np.bincount(p, minlength=n_classes).astype(np.float64)
    n_true = np.bincount(t, minlength=n_classes).astype(np.float64)
    denom = n_pred + n_true
    return np.divide(2 * tp, denom, out=np.zeros(n_classes), where=denom > 0)


def macro_f1(pred, truth, n_classes: int | None = None) -> float:
    """Unweighted mean of per-class F1 over classes with truth support.

    Classes that are only predicted (no truth rows) are skipped, as are classes
    absent from both; a supported class nobody predicts scores 0.
    """
    t = _codes(truth)
    f1 = per_class_f1(pred, truth, n_classes)
    support = np.bincount(t, minlength=f1.size) > 0
    if not support.any():
        raise ValueError("macro_f1 of empty truth")
    return float(f1[support].mean())


def accuracy(pred, truth) -> float:
    p, t = _codes(pred), _codes(truth)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    if p.size == 0:
        raise ValueError("accuracy of empty series")
    return float(np.mean(p == t))
