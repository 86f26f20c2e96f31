"""Linear probes on a frozen task model's penultimate layer.

The representation is extracted once, standardized, and a logistic-regression
probe is cross-validated to predict the attribute. The task model itself is
never touched; its parameter hash is compared before and after probing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import rankdata

from .audit import AuditReport, derive_seed, plan_folds, prepare_attribute, prepare_label, cross_val_predict
from .dataset import Dataset, encode_features, rows_with_attribute
from .metrics import accuracy, macro_f1
from .models import FittedModel, PredictorSpec, fit

# a linear layer fit by plain full-batch gradient descent
PROBE_SPEC = PredictorSpec("logistic_regression", {"solver": "gd"})


@dataclass(frozen=True)
class ProbeResult:
    attribute: str
    macro_f1: float
    accuracy: float
    # expected macro-F1 of a predictor whose outputs are independent of the truth
    # but keep the probe's prediction frequencies
    chance_f1: float
    # macro-F1 of always predicting the most frequent category
    majority_f1: float
    folds: int
    n_used: int = 0
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"attribute": self.attribute, "macro_f1": self.macro_f1, "accuracy": self.accuracy,
                "chance_f1": self.chance_f1, "majority_f1": self.majority_f1, "folds": self.folds,
                "n_used": self.n_used, "warnings": list(self.warnings)}


def chance_macro_f1(pred_counts, true_counts) -> float:
    """E[macro-F1] when predictions are a random permutation of themselves.

    F1 of class c has the fixed denominator n_pred + n_true, and the expected
    true-positive count under permutation is n_pred * n_true / N.
    """
    p = np.asarray(pred_counts, dtype=np.float64)
    t = np.asarray(true_counts, dtype=np.float64)
    n = t.sum()
    sup = t > 0
    return float(np.mean(2.0 * p[sup] * t[sup] / (n * (p[sup] + t[sup]))))


def majority_macro_f1(true_counts) -> float:
    t = np.asarray(true_counts, dtype=np.float64)
    m = int(np.argmax(t))
    # only the majority class scores; every other supported class has F1 = 0
    return float(2.0 * t[m] / (t.sum() + t[m]) / np.count_nonzero(t))


def train_task_model(ds: Dataset, spec: PredictorSpec) -> FittedModel:
    """Fit a task model on every row of ``ds`` to predict its label."""
    ds = encode_features(ds)
    y = prepare_label(ds, np.arange(ds.n_rows))
    return fit(spec, ds.features, y.codes, n_classes=y.n_categories)


def split_probe(task_model: FittedModel, ds: Dataset, attr: str, k: int = 3, seed: int = 0,
                min_count: int = 100, probe: PredictorSpec = PROBE_SPEC) -> ProbeResult:
    if not task_model.has_representation:
        raise TypeError(f"{task_model.spec.family} has no penultimate representation to probe")
    ds = encode_features(ds)
    warnings: list[str] = []
    rows = rows_with_attribute(ds, attr)
    a = prepare_attribute(ds, attr, rows, min_count, warnings)
    before = task_model.parameter_hash()
    R = task_model.representation(ds.features[rows])
    mu = R.mean(axis=0)
    sd = R.std(axis=0)
    R = (R - mu) / np.where(sd > 0, sd, 1.0)
    plan = plan_folds(rows.size, k, a, derive_seed(seed, "probe", attr, "folds"))
    warnings.extend(plan.warnings)
    pred = cross_val_predict(R, a, probe, plan, seed=derive_seed(seed, "probe", attr), warnings=warnings)
    if task_model.parameter_hash() != before:
        raise RuntimeError("task model parameters changed during probing")
    true_counts = a.counts()
    pred_counts = np.bincount(pred.codes, minlength=a.n_categories)
    return ProbeResult(attribute=attr, macro_f1=macro_f1(pred, a, a.n_categories), accuracy=accuracy(pred, a),
                       chance_f1=chance_macro_f1(pred_counts, true_counts),
                       majority_f1=majority_macro_f1(true_counts), folds=k, n_used=int(rows.size),
                       warnings=tuple(warnings))


def spearman_rho(x, y) -> float:
    """Spearman correlation with average ranks for ties (Pearson on the ranks)."""
    rx = rankdata(np.asarray(x, dtype=np.float64))
    ry = rankdata(np.asarray(y, dtype=np.float64))
    if rx.size != ry.size:
        raise ValueError("rank correlation of unequal-length sequences")
    dx, dy = rx - rx.mean(), ry - ry.mean()
    denom = np.sqrt((dx ** 2).sum() * (dy ** 2).sum())
    if denom == 0:
        return float("nan")
    return float((dx * dy).sum() / denom)


def correlate_detectability(audit: AuditReport | Mapping[str, float], probes) -> float:
    """Spearman rho between ensemble detectability and probe macro-F1 over shared attributes.

    ``audit`` is a report or a plain ``{attribute: detectability}`` mapping.
    """
    if isinstance(audit, Mapping):
        scores = dict(audit)
    else:
        scores = {a.attribute: a.detectability_ensemble for a in audit.attributes}
    by_name = {p.attribute: p for p in probes}
    shared = [n for n in scores if n in by_name and scores[n] is not None]
    if len(shared) < 3:
        raise ValueError(f"rank correlation needs >= 3 shared attributes, found {len(shared)}")
    return spearman_rho([scores[n] for n in shared], [by_name[n].macro_f1 for n in shared])
