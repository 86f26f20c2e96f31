"""Utility and detectability audit of dataset attributes.

Utility is the chance-adjusted MI between an attribute and the label.
Detectability is the chance-adjusted MI between the attribute and out-of-fold
surrogate predictions of it from the input features. In anti-causal mode the
surrogates are trained separately inside every label partition, so that
attribute information reaching the features only through the label is not
counted.
"""
from __future__ import annotations

import hashlib
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .dataset import CategoricalSeries, Dataset, encode_features, rows_with_all_attributes, rows_with_attribute
from .discretization import DEFAULT_MIN_COUNT, categorize, merge_rare
from .infotheory import (AmiScore, ContingencyTable, adjusted_mi, conditional_adjusted_mi, contingency,
                         stratified_contingency)
from .models import FAMILIES, PredictorSpec, fit

log = logging.getLogger(__name__)

DIRECTIONS = ("causal_x_to_y", "anticausal_y_to_x")
MISSING_POLICIES = ("per_attribute", "strict")
MIN_ROWS_PER_FOLD = 10
MIN_PARTITION_ROWS = 20


class InsufficientData(ValueError):
    pass


def derive_seed(master: int, *parts: Any) -> int:
    """Stable 63-bit seed from a master seed and a task key."""
    key = "\x1f".join([str(master)] + [str(p) for p in parts]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


# --------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: np.ndarray
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64).copy()
        a.flags.writeable = False
        object.__setattr__(self, "assignment", a)

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = self.assignment == fold
        return np.flatnonzero(~test), np.flatnonzero(test)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def plan_folds(n: int, k: int, stratify: CategoricalSeries | None = None, seed: int = 0) -> FoldPlan:
    """Seeded K-fold assignment, stratified when a key is given.

    Rows are dealt round-robin within each (shuffled) stratum, continuing the
    count across strata, so fold sizes differ by at most one overall and
    within every stratum.
    """
    if k < 2:
        raise ValueError("K must be >= 2")
    if k > n:
        raise ValueError(f"K={k} exceeds the number of rows ({n})")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    warnings = []
    if stratify is None:
        order = rng.permutation(n)
        assignment[order] = np.arange(n) % k
        return FoldPlan(k, assignment)
    if len(stratify) != n:
        raise ValueError("stratification key length differs from n")
    pos = 0
    for c in range(stratify.n_categories):
        members = np.flatnonzero(stratify.codes == c)
        if members.size == 0:
            continue
        if members.size < k:
            warnings.append(f"stratum {stratify.names[c]!r} has {members.size} rows < K={k}; "
                            f"it is spread over {members.size} folds")
        members = members[rng.permutation(members.size)]
        assignment[members] = (pos + np.arange(members.size)) % k
        pos += members.size
    return FoldPlan(k, assignment, tuple(warnings))


# --------------------------------------------------------------------------
# execution of (attribute x family x partition x fold) units


@dataclass(frozen=True)
class _Unit:
    spec: PredictorSpec
    train: np.ndarray
    labels: np.ndarray
    n_classes: int
    test: np.ndarray


def _run_unit(X: np.ndarray, u: _Unit) -> np.ndarray:
    model = fit(u.spec, X[u.train], u.labels, n_classes=u.n_classes)
    return model.predict(X[u.test])


_WORKER_X: np.ndarray | None = None


def _init_worker(X):
    global _WORKER_X
    _WORKER_X = X
    threadpool_limits(1)


def _worker(u: _Unit) -> np.ndarray:
    return _run_unit(_WORKER_X, u)


def _execute(X: np.ndarray, units: Sequence[_Unit], jobs: int = 1) -> list[np.ndarray]:
    """Run units in order; results never depend on ``jobs``."""
    if jobs <= 1 or len(units) <= 1:
        # workers run single-threaded BLAS; match them so sums are bitwise identical
        with threadpool_limits(1):
            return [_run_unit(X, u) for u in units]
    with ProcessPoolExecutor(max_workers=min(jobs, len(units)), initializer=_init_worker, initargs=(X,)) as ex:
        return list(ex.map(_worker, units))


def _fold_units(X_rows: np.ndarray, a: CategoricalSeries, spec: PredictorSpec, plan: FoldPlan,
                seed_key: tuple, master_seed: int, warnings: list[str]) -> list[tuple[_Unit, np.ndarray]]:
    """One unit per non-empty fold, paired with the fold's positions within ``X_rows``."""
    units = []
    for f in range(plan.k):
        tr, te = plan.split(f)
        if te.size == 0:
            continue
        labels = a.codes[tr]
        missing = np.setdiff1d(np.flatnonzero(a.counts()), np.unique(labels))
        if missing.size:
            warnings.append(f"fold {f}: training split lacks classes "
                            f"{[a.names[c] for c in missing]}; they get zero probability")
        s = spec.with_seed(derive_seed(master_seed, *seed_key, f))
        units.append((_Unit(s, X_rows[tr], labels, a.n_categories, X_rows[te]), te))
    return units


def cross_val_predict(X, a: CategoricalSeries, spec: PredictorSpec, plan: FoldPlan,
                      seed: int = 0, jobs: int = 1, warnings: list[str] | None = None) -> CategoricalSeries:
    """Out-of-fold predictions: row i is predicted by the model that never saw fold(i)."""
    X = np.asarray(X, dtype=np.float64)
    if len(a) != X.shape[0] or plan.assignment.size != X.shape[0]:
        raise ValueError("X, attribute and fold plan must cover the same rows")
    warnings = [] if warnings is None else warnings
    pairs = _fold_units(np.arange(X.shape[0]), a, spec, plan, (spec.family,), seed, warnings)
    out = np.full(X.shape[0], -1, dtype=np.int64)
    for (_, local), pred in zip(pairs, _execute(X, [u for u, _ in pairs], jobs)):
        out[local] = pred
    return CategoricalSeries(out, a.names)


# --------------------------------------------------------------------------
# attribute / label preparation


def prepare_attribute(ds: Dataset, attr: str, rows: np.ndarray, min_count: int,
                      warnings: list[str]) -> CategoricalSeries:
    col = ds.column(attr)
    series, _ = categorize(ds.columns[attr][rows], col.kind, bin_width=col.bin_width, bin_edges=col.bin_edges)
    merged = merge_rare(series, min_count)
    if merged.n_categories < series.n_categories:
        warnings.append(f"merged rare categories: {series.n_categories} -> {merged.n_categories} "
                        f"(min_count={min_count})")
    if merged.n_categories == 1:
        warnings.append("attribute has a single category after merging (degenerate)")
    return merged


def prepare_label(ds: Dataset, rows: np.ndarray) -> CategoricalSeries:
    col = ds.column(ds.label_name)
    lab = ds.label[rows]
    if col.kind == "categorical" and any(v is None for v in lab):
        raise InsufficientData("label column has missing values")
    if col.kind == "continuous" and np.isnan(lab.astype(np.float64)).any():
        raise InsufficientData("label column has missing values")
    series, _ = categorize(lab, col.kind, bin_width=col.bin_width, bin_edges=col.bin_edges)
    return series


# --------------------------------------------------------------------------
# utility


def basic_bootstrap_ci(theta: float, replicates: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    alpha = 1.0 - level
    q_lo, q_hi = np.quantile(replicates, [alpha / 2, 1 - alpha / 2])
    return float(2 * theta - q_hi), float(2 * theta - q_lo)


def bootstrap_ami(a, b, replicates: int, seed: int, normalization: str = "max",
                  level: float = 0.95) -> tuple[AmiScore, tuple[float, float]]:
    """AMI of two aligned series with a basic-bootstrap interval.

    Resampling rows jointly with replacement is the same as drawing the joint
    table from a multinomial over its cells, which is what is done here.
    """
    table = contingency(a, b)
    point = adjusted_mi(table, normalization)
    if replicates <= 0:
        return point, (point.ami, point.ami)
    rng = np.random.default_rng(seed)
    p = table.counts.ravel() / table.n
    draws = rng.multinomial(table.n, p, size=replicates)
    shape = table.counts.shape
    reps = np.array([adjusted_mi(ContingencyTable(d.reshape(shape)), normalization).ami for d in draws])
    return point, basic_bootstrap_ci(point.ami, reps, level)


def bootstrap_conditional_ami(a, b, strata, replicates: int, seed: int, normalization: str = "max",
                              level: float = 0.95) -> tuple[AmiScore, tuple[float, float]]:
    """Conditional AMI given ``strata`` with a basic-bootstrap interval (rows resampled jointly)."""
    tables = stratified_contingency(a, b, strata)
    point = conditional_adjusted_mi(tables, normalization)
    if replicates <= 0:
        return point, (point.ami, point.ami)
    rng = np.random.default_rng(seed)
    n = int(tables.sum())
    draws = rng.multinomial(n, tables.ravel() / n, size=replicates)
    reps = np.array([conditional_adjusted_mi(d.reshape(tables.shape), normalization).ami for d in draws])
    return point, basic_bootstrap_ci(point.ami, reps, level)


def compute_utility(a: CategoricalSeries, y: CategoricalSeries, bootstrap_reps: int = 1000, seed: int = 0,
                    normalization: str = "max", warnings: list[str] | None = None
                    ) -> tuple[AmiScore, tuple[float, float]]:
    if len(a) != len(y):
        raise ValueError("attribute and label differ in length")
    if len(a) < 20:
        raise InsufficientData(f"utility needs at least 20 rows, got {len(a)}")
    if np.count_nonzero(a.counts()) <= 1 or np.count_nonzero(y.counts()) <= 1:
        if warnings is not None:
            warnings.append("utility is 0: attribute or label has a single category")
        zero = AmiScore(0.0, 0.0, 0.0, 0.0, 0.0)
        return zero, (0.0, 0.0)
    return bootstrap_ami(a, y, bootstrap_reps, seed, normalization)


# --------------------------------------------------------------------------
# detectability


@dataclass
class Detection:
    """Out-of-fold surrogate predictions of one attribute and their score.

    ``score`` is the reported detectability. For conditioned runs it is the
    AMI of attribute and prediction given the label partition; ``pooled`` is
    then the plain AMI over all scored rows, kept for reference.
    """
    score: AmiScore
    ci: tuple[float, float]
    predictions: np.ndarray  # -1 where a row received no prediction
    truth: CategoricalSeries
    pooled: AmiScore
    warnings: list[str] = field(default_factory=list)


@dataclass
class _DetectPlan:
    """Units for one (attribute, family) pair plus where their predictions go."""
    units: list[_Unit]
    local: list[np.ndarray]
    n: int
    truth: CategoricalSeries
    strata: CategoricalSeries | None
    warnings: list[str]


def _plan_detection(X_rows: np.ndarray, a: CategoricalSeries, y: CategoricalSeries | None,
                    spec: PredictorSpec, k: int, seed: int, attr: str) -> _DetectPlan:
    warnings: list[str] = []
    n = len(a)
    if n < MIN_ROWS_PER_FOLD * k:
        raise InsufficientData(f"{n} usable rows < {MIN_ROWS_PER_FOLD}*K={MIN_ROWS_PER_FOLD * k}")
    if y is not None and np.count_nonzero(y.counts()) == 1:
        y = None  # one label partition: conditioning changes nothing
    if y is None:
        plan = plan_folds(n, k, a, derive_seed(seed, attr, "folds"))
        warnings.extend(plan.warnings)
        pairs = _fold_units(X_rows, a, spec, plan, (attr, spec.family, "all"), seed, warnings)
        return _DetectPlan([u for u, _ in pairs], [t for _, t in pairs], n, a, None, warnings)
    units: list[_Unit] = []
    local: list[np.ndarray] = []
    for v in range(y.n_categories):
        part = np.flatnonzero(y.codes == v)
        if part.size == 0:
            continue
        name = y.names[v]
        if part.size < MIN_PARTITION_ROWS:
            warnings.append(f"label partition {name!r} has {part.size} rows < {MIN_PARTITION_ROWS}; excluded")
            continue
        kv = k
        if part.size < MIN_ROWS_PER_FOLD * k:
            kv = max(2, part.size // MIN_ROWS_PER_FOLD)
            warnings.append(f"label partition {name!r} has {part.size} rows; K reduced to {kv}")
        a_v = a.take(part)
        plan = plan_folds(part.size, kv, a_v, derive_seed(seed, attr, "folds", name))
        warnings.extend(f"label partition {name!r}: {w}" for w in plan.warnings)
        for u, t in _fold_units(X_rows[part], a_v, spec, plan, (attr, spec.family, name), seed, warnings):
            units.append(u)
            local.append(part[t])
    return _DetectPlan(units, local, n, a, y, warnings)


def _finish_detection(dp: _DetectPlan, results: Sequence[np.ndarray], replicates: int, seed: int,
                      normalization: str) -> Detection:
    pred = np.full(dp.n, -1, dtype=np.int64)
    for t, r in zip(dp.local, results):
        if np.any(pred[t] != -1):
            raise AssertionError("a row was predicted twice")
        pred[t] = r
    scored = pred >= 0
    if not scored.any():
        raise InsufficientData("no row received a surrogate prediction")
    truth = dp.truth.codes[scored]
    guess = CategoricalSeries(pred[scored], dp.truth.names)
    pooled = adjusted_mi(contingency(truth, guess), normalization)
    if dp.strata is None:
        score, ci = bootstrap_ami(truth, guess, replicates, seed, normalization)
    else:
        # pooled AMI would count partition-specific prediction rates as signal,
        # so the label partition is held fixed in both the score and its null
        score, ci = bootstrap_conditional_ami(truth, guess, dp.strata.codes[scored], replicates, seed,
                                              normalization)
    return Detection(score, ci, pred, dp.truth, pooled, dp.warnings)


def _attribute_rows(ds: Dataset, attr: str, rows: np.ndarray | None) -> np.ndarray:
    return rows_with_attribute(ds, attr) if rows is None else rows


def _detect(ds: Dataset, attr: str, spec: PredictorSpec, k: int, seed: int, conditioned: bool,
            min_count: int, replicates: int, normalization: str, jobs: int, rows=None) -> Detection:
    ds = encode_features(ds)
    rows = _attribute_rows(ds, attr, rows)
    warnings: list[str] = []
    a = prepare_attribute(ds, attr, rows, min_count, warnings)
    y = prepare_label(ds, rows) if conditioned else None
    dp = _plan_detection(rows, a, y, spec, k, seed, attr)
    dp.warnings[:0] = warnings
    results = _execute(ds.features, dp.units, jobs)
    return _finish_detection(dp, results, replicates, derive_seed(seed, attr, spec.family, "bootstrap"),
                             normalization)


def detect_unconditioned(ds: Dataset, attr: str, spec: PredictorSpec, k: int = 3, seed: int = 0, *,
                         min_count: int = DEFAULT_MIN_COUNT, normalization: str = "max", jobs: int = 1,
                         replicates: int = 0) -> Detection:
    """Detectability for X -> Y tasks: one surrogate per fold over all usable rows."""
    return _detect(ds, attr, spec, k, seed, False, min_count, replicates, normalization, jobs)


def detect_conditioned(ds: Dataset, attr: str, spec: PredictorSpec, k: int = 3, seed: int = 0, *,
                       min_count: int = DEFAULT_MIN_COUNT, normalization: str = "max", jobs: int = 1,
                       replicates: int = 0) -> Detection:
    """Detectability for Y -> X tasks: surrogates trained inside each label partition,
    predictions pooled over the whole dataset before scoring."""
    return _detect(ds, attr, spec, k, seed, True, min_count, replicates, normalization, jobs)


# --------------------------------------------------------------------------
# full audit


@dataclass(frozen=True)
class AuditSettings:
    direction: str = "causal_x_to_y"
    attributes: tuple[str, ...] | None = None  # None: every attribute column
    models: tuple[str, ...] = FAMILIES
    folds: int = 3
    seed: int = 0
    bootstrap_replicates: int = 1000
    detectability_replicates: int = 200
    min_count: int = DEFAULT_MIN_COUNT
    missing_policy: str = "per_attribute"
    normalization: str = "max"
    hyperparameters: dict = field(default_factory=dict)
    jobs: int = 1

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.folds < 2:
            raise ValueError("K must be >= 2")
        if not self.models:
            raise ValueError("at least one model family required")
        for m in self.models:
            if m not in FAMILIES:
                raise ValueError(f"unknown model family {m!r}")
        if self.missing_policy not in MISSING_POLICIES:
            raise ValueError(f"missing_policy must be one of {MISSING_POLICIES}")

    def spec(self, family: str) -> PredictorSpec:
        return PredictorSpec(family, self.hyperparameters.get(family, {}))

    def echo(self) -> dict:
        return {
            "direction": self.direction,
            "attributes": list(self.attributes) if self.attributes is not None else None,
            "models": list(self.models),
            "folds": self.folds,
            "seed": self.seed,
            "bootstrap_replicates": self.bootstrap_replicates,
            "detectability_replicates": self.detectability_replicates,
            "min_count": self.min_count,
            "missing_policy": self.missing_policy,
            "normalization": self.normalization,
            "hyperparameters": {k: dict(v) for k, v in sorted(self.hyperparameters.items())},
        }


@dataclass
class AttributeAudit:
    attribute: str
    mode: str
    n_used: int = 0
    n_categories: int = 0
    utility: AmiScore | None = None
    utility_ci: tuple[float, float] | None = None
    detectability: dict[str, AmiScore] = field(default_factory=dict)
    detectability_ci: dict[str, tuple[float, float]] = field(default_factory=dict)
    # conditioned mode only: AMI of the pooled predictions, ignoring the label strata
    detectability_pooled: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    error: str | None = None

    @property
    def detectability_ensemble(self) -> float | None:
        if not self.detectability:
            return None
        return max(s.ami for s in self.detectability.values())

    @property
    def ensemble_family(self) -> str | None:
        if not self.detectability:
            return None
        best = self.detectability_ensemble
        return next(f for f, s in self.detectability.items() if s.ami == best)

    @property
    def risk_score(self) -> float:
        if self.utility is None or self.detectability_ensemble is None:
            return -np.inf
        return self.detectability_ensemble * max(self.utility.ami, 0.0)

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "mode": self.mode,
            "n_used": self.n_used,
            "n_categories": self.n_categories,
            "utility": self.utility.to_dict() if self.utility else None,
            "utility_ci": list(self.utility_ci) if self.utility_ci else None,
            "detectability": {f: s.to_dict() for f, s in self.detectability.items()},
            "detectability_ci": {f: list(ci) for f, ci in self.detectability_ci.items()},
            "detectability_pooled": dict(self.detectability_pooled),
            "detectability_ensemble": self.detectability_ensemble,
            "ensemble_family": self.ensemble_family,
            "risk_score": self.risk_score if np.isfinite(self.risk_score) else None,
            "warnings": list(self.warnings),
            "error": self.error,
        }


@dataclass
class AuditReport:
    fingerprint: dict
    config: dict
    attributes: list[AttributeAudit]
    seed: int
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dataset": self.fingerprint,
            "config": self.config,
            "seed": self.seed,
            "warnings": list(self.warnings),
            "attributes": [a.to_dict() for a in self.attributes],
        }

    def get(self, name: str) -> AttributeAudit:
        for a in self.attributes:
            if a.attribute == name:
                return a
        raise KeyError(name)


def run_audit(ds: Dataset, settings: AuditSettings) -> AuditReport:
    """Audit every configured attribute; per-attribute failures are recorded, not raised."""
    ds = encode_features(ds)
    attrs = list(ds.attribute_names if settings.attributes is None else settings.attributes)
    unknown = [a for a in attrs if a not in ds.attribute_names]
    if unknown:
        raise ValueError(f"unknown attributes {unknown}")
    report_warnings = []
    if not attrs:
        report_warnings.append("no attributes configured; report is empty")
    conditioned = settings.direction == "anticausal_y_to_x"
    strict_rows = rows_with_all_attributes(ds, attrs) if settings.missing_policy == "strict" and attrs else None

    audits: list[AttributeAudit] = []
    plans: list[tuple[AttributeAudit, str, _DetectPlan]] = []
    for attr in attrs:
        au = AttributeAudit(attr, settings.direction)
        audits.append(au)
        try:
            rows = strict_rows if strict_rows is not None else rows_with_attribute(ds, attr)
            if rows.size == 0:
                raise InsufficientData("attribute is missing on every row")
            a = prepare_attribute(ds, attr, rows, settings.min_count, au.warnings)
            y = prepare_label(ds, rows)
            au.n_used, au.n_categories = int(rows.size), a.n_categories
            au.utility, au.utility_ci = compute_utility(
                a, y, settings.bootstrap_replicates, derive_seed(settings.seed, attr, "utility"),
                settings.normalization, au.warnings)
            if not au.utility_ci[0] - 1e-12 <= au.utility.ami <= au.utility_ci[1] + 1e-12:
                au.warnings.append("utility point estimate lies outside its basic-bootstrap interval (skew)")
            for fam in settings.models:
                dp = _plan_detection(rows, a, y if conditioned else None, settings.spec(fam),
                                     settings.folds, settings.seed, attr)
                plans.append((au, fam, dp))
        except ValueError as exc:  # InsufficientData included
            au.error = str(exc)
            au.warnings.append(f"attribute skipped: {exc}")
            log.warning("attribute %s skipped: %s", attr, exc)

    units = [u for _, _, dp in plans for u in dp.units]
    results = _execute(ds.features, units, settings.jobs)
    pos = 0
    for au, fam, dp in plans:
        chunk = results[pos:pos + len(dp.units)]
        pos += len(dp.units)
        try:
            det = _finish_detection(dp, chunk, settings.detectability_replicates,
                                    derive_seed(settings.seed, au.attribute, fam, "bootstrap"),
                                    settings.normalization)
        except ValueError as exc:
            au.warnings.append(f"{fam}: {exc}")
            continue
        au.detectability[fam] = det.score
        au.detectability_ci[fam] = det.ci
        if conditioned:
            au.detectability_pooled[fam] = det.pooled.ami
        au.warnings.extend(f"{fam}: {w}" for w in det.warnings)

    order = sorted(range(len(audits)), key=lambda i: (-audits[i].risk_score, i))
    fp = {"n_rows": ds.n_rows, "n_columns": len(ds.schema), "n_encoded_features": len(ds.feature_names),
          "content_hash": ds.fingerprint}
    return AuditReport(fp, settings.echo(), [audits[i] for i in order], settings.seed, report_warnings)


def default_jobs() -> int:
    return os.cpu_count() or 1
