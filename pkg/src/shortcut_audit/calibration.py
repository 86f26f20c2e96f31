"""Worst-case AUC degradation from a planted, fully detectable binary shortcut.

For each flip fraction the synthetic attribute starts as a copy of the binary
label, a seeded random subset of rows is flipped, and the attribute is
appended to the features as one extra column. A task model is cross-validated
on the augmented data and every held-out fold is scored twice: as generated,
and with the artifact column rewritten to the negated label.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from .audit import derive_seed, plan_folds, prepare_label
from .dataset import CategoricalSeries, Dataset, DatasetError, encode_features, with_extra_feature
from .infotheory import AmiScore, ami_of
from .metrics import auc
from .models import PredictorSpec, fit

DEFAULT_FLIP_FRACTIONS = (0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.45, 0.49)
ARTIFACT_MODES = ("all_rows", "flipped_rows")
ARTIFACT_COLUMN = "synthetic_artifact"
CSV_COLUMNS = ("flip_fraction", "utility_ami", "auc_correlated", "auc_counterfactual", "auc_drop",
               "ci_low_drop", "ci_high_drop")


@dataclass(frozen=True)
class CalibrationConfig:
    flip_fractions: tuple[float, ...] = DEFAULT_FLIP_FRACTIONS
    task_model: PredictorSpec = field(default_factory=lambda: PredictorSpec("mlp"))
    folds: int = 3
    seed: int = 0
    # "all_rows": the artifact column holds A on every row;
    # "flipped_rows": it marks only the flipped rows
    artifact_mode: str = "all_rows"
    use_artifact: bool = True

    def __post_init__(self):
        fr = tuple(float(f) for f in self.flip_fractions)
        if not fr:
            raise ValueError("at least one flip fraction required")
        if any(not 0.0 <= f < 0.5 for f in fr):
            raise ValueError("flip fractions must lie in [0, 0.5)")
        if list(fr) != sorted(fr):
            raise ValueError("flip fractions must be sorted ascending")
        if self.folds < 2:
            raise ValueError("K must be >= 2")
        if self.artifact_mode not in ARTIFACT_MODES:
            raise ValueError(f"artifact_mode must be one of {ARTIFACT_MODES}")
        object.__setattr__(self, "flip_fractions", fr)

    def echo(self) -> dict:
        return {"flip_fractions": list(self.flip_fractions), "task_model": self.task_model.family,
                "hyperparameters": dict(self.task_model.hyperparameters), "folds": self.folds,
                "seed": self.seed, "artifact_mode": self.artifact_mode, "use_artifact": self.use_artifact}


class Injection(NamedTuple):
    dataset: Dataset
    attribute: CategoricalSeries
    utility: AmiScore
    flipped: np.ndarray


def binary_label(ds: Dataset) -> np.ndarray:
    y = prepare_label(ds, np.arange(ds.n_rows))
    if y.n_categories != 2:
        raise DatasetError(f"calibration needs a binary label, found {y.n_categories} categories")
    return y.codes


def inject_synthetic(ds: Dataset, flip_fraction: float, seed: int, mode: str = "all_rows") -> Injection:
    if not 0.0 <= flip_fraction < 0.5:
        raise ValueError("flip fraction must lie in [0, 0.5)")
    if mode not in ARTIFACT_MODES:
        raise ValueError(f"mode must be one of {ARTIFACT_MODES}")
    y = binary_label(ds)
    n = y.size
    rng = np.random.default_rng(seed)
    flipped = np.sort(rng.choice(n, size=int(math.floor(flip_fraction * n)), replace=False))
    a = y.copy()
    a[flipped] = 1 - a[flipped]
    if mode == "all_rows":
        column = a.astype(np.float64)
    else:
        column = np.zeros(n)
        column[flipped] = 1.0
    attr = CategoricalSeries(a, ("0", "1"))
    aug = with_extra_feature(encode_features(ds), ARTIFACT_COLUMN, column)
    return Injection(aug, attr, ami_of(attr, y), flipped)


def make_counterfactual(X, y, column: int = -1) -> np.ndarray:
    """Copy of ``X`` whose artifact column is the negated label (Y=0 -> 1, Y=1 -> 0)."""
    X = np.array(X, dtype=np.float64, copy=True)
    y = np.asarray(y)
    if X.ndim != 2 or not -X.shape[1] <= column < X.shape[1]:
        raise ValueError("artifact column absent")
    X[:, column] = 1.0 - y
    return X


def make_correlated(X, y, column: int = -1) -> np.ndarray:
    """Copy of ``X`` whose artifact column equals the label."""
    X = np.array(X, dtype=np.float64, copy=True)
    if X.ndim != 2 or not -X.shape[1] <= column < X.shape[1]:
        raise ValueError("artifact column absent")
    X[:, column] = np.asarray(y, dtype=np.float64)
    return X


def t_interval(values, level: float = 0.95) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    m = float(v.mean())
    if v.size < 2:
        return m, m
    half = stats.t.ppf(0.5 + level / 2, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size)
    return m - float(half), m + float(half)


@dataclass
class CalibrationRow:
    flip_fraction: float
    utility: AmiScore | None = None
    auc_correlated: float = float("nan")
    auc_counterfactual: float = float("nan")
    auc_drop: float = float("nan")
    ci_correlated: tuple[float, float] = (float("nan"), float("nan"))
    ci_counterfactual: tuple[float, float] = (float("nan"), float("nan"))
    ci_drop: tuple[float, float] = (float("nan"), float("nan"))
    fold_auc_correlated: list[float] = field(default_factory=list)
    fold_auc_counterfactual: list[float] = field(default_factory=list)
    error: str | None = None

    @property
    def utility_ami(self) -> float:
        return self.utility.ami if self.utility else float("nan")

    def csv_row(self) -> list[float]:
        return [self.flip_fraction, self.utility_ami, self.auc_correlated, self.auc_counterfactual,
                self.auc_drop, self.ci_drop[0], self.ci_drop[1]]

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)
        return {
            "flip_fraction": self.flip_fraction,
            "utility_ami": num(self.utility_ami),
            "utility": self.utility.to_dict() if self.utility else None,
            "auc_correlated": num(self.auc_correlated),
            "auc_counterfactual": num(self.auc_counterfactual),
            "auc_drop": num(self.auc_drop),
            "ci_low_drop": num(self.ci_drop[0]),
            "ci_high_drop": num(self.ci_drop[1]),
            "ci_correlated": [num(v) for v in self.ci_correlated],
            "ci_counterfactual": [num(v) for v in self.ci_counterfactual],
            "fold_auc_correlated": [num(v) for v in self.fold_auc_correlated],
            "fold_auc_counterfactual": [num(v) for v in self.fold_auc_counterfactual],
            "error": self.error,
        }


@dataclass
class CalibrationCurve:
    rows: list[CalibrationRow]
    config: dict

    def to_dict(self) -> dict:
        return {"config": self.config, "rows": [r.to_dict() for r in self.rows]}

    def monotone_violations(self) -> list[tuple[float, float]]:
        """Adjacent (by utility) pairs whose drop decreases with non-overlapping CIs."""
        ok = sorted((r for r in self.rows if r.error is None), key=lambda r: r.utility_ami)
        bad = []
        for lo, hi in zip(ok, ok[1:]):
            if hi.auc_drop < lo.auc_drop and hi.ci_drop[1] < lo.ci_drop[0]:
                bad.append((lo.flip_fraction, hi.flip_fraction))
        return bad


def run_calibration(ds: Dataset, cfg: CalibrationConfig) -> CalibrationCurve:
    ds = encode_features(ds)
    y = binary_label(ds)
    ylab = CategoricalSeries(y, ("0", "1"))
    plan = plan_folds(y.size, cfg.folds, ylab, derive_seed(cfg.seed, "calibration", "folds"))
    rows = []
    for frac in cfg.flip_fractions:
        row = CalibrationRow(frac)
        rows.append(row)
        try:
            inj = inject_synthetic(ds, frac, derive_seed(cfg.seed, "inject", frac), cfg.artifact_mode)
            row.utility = inj.utility
            X = inj.dataset.features
            s_cor = np.empty(y.size)
            s_cf = np.empty(y.size)
            for f in range(cfg.folds):
                tr, te = plan.split(f)
                X_te_cf = make_counterfactual(X[te], y[te])
                X_tr, X_te = X[tr], X[te]
                if not cfg.use_artifact:
                    X_tr, X_te, X_te_cf = X_tr[:, :-1], X_te[:, :-1], X_te_cf[:, :-1]
                spec = cfg.task_model.with_seed(derive_seed(cfg.seed, "task", frac, f))
                model = fit(spec, X_tr, y[tr], n_classes=2)
                s_cor[te] = model.predict_proba(X_te)[:, 1]
                s_cf[te] = model.predict_proba(X_te_cf)[:, 1]
                row.fold_auc_correlated.append(auc(s_cor[te], y[te]))
                row.fold_auc_counterfactual.append(auc(s_cf[te], y[te]))
            row.auc_correlated = auc(s_cor, y)
            row.auc_counterfactual = auc(s_cf, y)
            row.auc_drop = row.auc_correlated - row.auc_counterfactual
            row.ci_correlated = t_interval(row.fold_auc_correlated)
            row.ci_counterfactual = t_interval(row.fold_auc_counterfactual)
            drops = np.subtract(row.fold_auc_correlated, row.fold_auc_counterfactual)
            row.ci_drop = t_interval(drops)
        except (ValueError, FloatingPointError) as exc:
            row.error = str(exc)
    return CalibrationCurve(rows, cfg.echo())
