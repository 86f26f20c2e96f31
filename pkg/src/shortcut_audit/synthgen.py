"""Seeded synthetic datasets whose information content is known analytically.

All binary variables are coded 0/1. Attribute and label columns are emitted as
categorical strings so the datasets round-trip through CSV unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import CategoricalSeries, ColumnSchema, Dataset, make_column

LN2 = float(np.log(2.0))


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-(p * np.log(p) + (1 - p) * np.log(1 - p)))


def _mi_of_joint(p: np.ndarray) -> float:
    pa = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / (pa @ py)[nz])))


def _h(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


@dataclass(frozen=True)
class JointSpec:
    """A joint distribution of (A, Y); the analytic quantities are always derived."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=np.float64)
        if p.ndim != 2 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("joint must be a non-negative matrix summing to 1")
        p.flags.writeable = False
        object.__setattr__(self, "probabilities", p)

    @property
    def analytic_mi(self) -> float:
        return _mi_of_joint(self.probabilities)

    @property
    def analytic_h_a(self) -> float:
        return _h(self.probabilities.sum(axis=1))

    @property
    def analytic_h_y(self) -> float:
        return _h(self.probabilities.sum(axis=0))


@dataclass(frozen=True)
class ChannelSpec:
    flip_probability: float = 0.0
    copies: int = 1
    distractor_count: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 0.5:
            raise ValueError("flip probability must lie in [0, 0.5]")
        if self.copies < 1:
            raise ValueError("need at least one copy")
        if self.distractor_count < 0:
            raise ValueError("distractor count must be non-negative")

    @property
    def analytic_mi_per_copy(self) -> float:
        """MI between a uniform binary attribute and one noisy copy."""
        return LN2 - binary_entropy(self.flip_probability)


def sample_joint(spec: JointSpec, n: int, seed: int) -> tuple[CategoricalSeries, CategoricalSeries]:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    ca, cy = spec.probabilities.shape
    cells = rng.choice(ca * cy, size=n, p=spec.probabilities.ravel())
    a, y = np.divmod(cells, cy)
    return (CategoricalSeries(a, tuple(str(i) for i in range(ca))),
            CategoricalSeries(y, tuple(str(j) for j in range(cy))))


def _flip(bits: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    return np.where(rng.random(bits.size) < p, 1 - bits, bits)


def noise_features(a, ch: ChannelSpec, seed: int) -> np.ndarray:
    """``copies`` noisy copies of binary ``a`` followed by uniform distractor columns."""
    bits = a.codes if isinstance(a, CategoricalSeries) else np.asarray(a, dtype=np.int64)
    if not np.isin(bits, (0, 1)).all():
        raise ValueError("noise_features needs a binary attribute")
    rng = np.random.default_rng(seed)
    cols = [_flip(bits, ch.flip_probability, rng).astype(np.float64) for _ in range(ch.copies)]
    cols += [rng.random(bits.size) for _ in range(ch.distractor_count)]
    return np.column_stack(cols)


def _build(features: np.ndarray, feature_names: Sequence[str], attrs: dict[str, np.ndarray],
           label: np.ndarray, label_name: str = "y") -> Dataset:
    schema = [ColumnSchema(n, "feature", "continuous") for n in feature_names]
    columns = {n: features[:, i].astype(np.float64) for i, n in enumerate(feature_names)}
    for name, v in attrs.items():
        schema.append(ColumnSchema(name, "attribute", "categorical"))
        columns[name] = make_column([str(int(x)) for x in v], "categorical")
    schema.append(ColumnSchema(label_name, "label", "categorical"))
    columns[label_name] = make_column([str(int(x)) for x in label], "categorical")
    return Dataset(columns, tuple(schema))


def channel_dataset(n: int, ch: ChannelSpec, seed: int) -> Dataset:
    """Uniform binary attribute ``a`` seen through a noisy channel; label is an independent coin."""
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, n)
    y = rng.integers(0, 2, n)
    X = noise_features(a, ch, int(rng.integers(2**31)))
    names = [f"x{i}" for i in range(ch.copies)] + [f"d{i}" for i in range(ch.distractor_count)]
    return _build(X, names, {"a": a}, y)


def chain_dataset(n: int, seed: int, label_flip: float = 0.2, feature_flip: float = 0.05,
                  copies: int = 5, distractors: int = 2) -> Dataset:
    """A -> Y -> X: features see the label only, so A is invisible in X once Y is fixed."""
    if n < 100:
        raise ValueError("chain_dataset needs n >= 100")
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, n)
    y = _flip(a, label_flip, rng)
    X = noise_features(y, ChannelSpec(feature_flip, copies, distractors), int(rng.integers(2**31)))
    names = [f"x{i}" for i in range(copies)] + [f"d{i}" for i in range(distractors)]
    return _build(X, names, {"a": a}, y)


def chain_truth(label_flip: float = 0.2, feature_flip: float = 0.05) -> dict:
    through = label_flip * (1 - feature_flip) + (1 - label_flip) * feature_flip
    return {
        "mi_a_y": LN2 - binary_entropy(label_flip),
        "mi_a_x_column": LN2 - binary_entropy(through),
        "conditional_mi_a_x_given_y": 0.0,
    }


def collider_joint(label_flip: float = 0.1) -> np.ndarray:
    """P(A, Z, Y) for A, Z fair coins and Y = (A or Z) flipped with ``label_flip``."""
    p = np.zeros((2, 2, 2))
    for a in (0, 1):
        for z in (0, 1):
            y_clean = a | z
            p[a, z, y_clean] += 0.25 * (1 - label_flip)
            p[a, z, 1 - y_clean] += 0.25 * label_flip
    return p


def collider_dataset(n: int, seed: int, label_flip: float = 0.1, feature_flip: float = 0.05,
                     copies: int = 5, distractors: int = 2) -> Dataset:
    """A -> Y <- Z with features copying Z: A is independent of X until Y is conditioned on."""
    if n < 100:
        raise ValueError("collider_dataset needs n >= 100")
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, n)
    z = rng.integers(0, 2, n)
    y = _flip(a | z, label_flip, rng)
    X = noise_features(z, ChannelSpec(feature_flip, copies, distractors), int(rng.integers(2**31)))
    names = [f"x{i}" for i in range(copies)] + [f"d{i}" for i in range(distractors)]
    return _build(X, names, {"a": a}, y)


def collider_truth(label_flip: float = 0.1) -> dict:
    p = collider_joint(label_flip)
    py1 = p[:, :, 1] / p[:, :, 1].sum()
    return {
        "mi_a_x_marginal": 0.0,
        "mi_a_z_given_y1": _mi_of_joint(py1),
        "mi_a_y": _mi_of_joint(p.sum(axis=1)),
    }


def task_dataset(n: int, seed: int, signal_flip: float = 0.3, copies: int = 3, distractors: int = 2) -> Dataset:
    """Binary task with weak genuine signal: features are noisy copies of the label."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = noise_features(y, ChannelSpec(signal_flip, copies, distractors), int(rng.integers(2**31)))
    names = [f"s{i}" for i in range(copies)] + [f"d{i}" for i in range(distractors)]
    return _build(X, names, {}, y)


def shortcut_dataset(n: int, seed: int, shortcut_flip: float = 0.19, signal_flip: float = 0.3) -> Dataset:
    """One planted shortcut (``planted``: label flipped w.p. ``shortcut_flip``, copied into X)
    next to a pure-noise attribute (``noise``) that X never sees."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    planted = _flip(y, shortcut_flip, rng)
    noise = rng.integers(0, 2, n)
    signal = noise_features(y, ChannelSpec(signal_flip, 2, 1), int(rng.integers(2**31)))
    X = np.column_stack([signal, planted.astype(np.float64)])
    return _build(X, ["s0", "s1", "d0", "artifact"], {"planted": planted, "noise": noise}, y)


def detectability_suite(n: int, seed: int, flips: Sequence[float] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5),
                        signal_flip: float = 0.2) -> Dataset:
    """Attributes ``a0..`` each leaking into one feature column through its own flip rate.

    The label is carried by three further noisy columns and is independent of
    every attribute.
    """
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    cols, names, attrs = [], [], {}
    for k, p in enumerate(flips):
        a = rng.integers(0, 2, n)
        attrs[f"a{k}"] = a
        cols.append(_flip(a, p, rng).astype(np.float64))
        names.append(f"leak{k}")
    sig = noise_features(y, ChannelSpec(signal_flip, 3, 0), int(rng.integers(2**31)))
    X = np.column_stack(cols + [sig])
    return _build(X, names + ["s0", "s1", "s2"], attrs, y)


def joint_dataset(spec: JointSpec, n: int, seed: int, distractors: int = 1) -> Dataset:
    a, y = sample_joint(spec, n, seed)
    rng = np.random.default_rng(seed + 1)
    X = rng.random((n, max(1, distractors)))
    return _build(X, [f"d{i}" for i in range(X.shape[1])], {"a": a.codes}, y.codes)


ICU_VITALS = ("heart_rate", "systolic_bp", "temperature", "bun", "wbc", "potassium", "sodium",
              "bicarbonate", "bilirubin", "gcs", "pao2", "fio2", "age", "resp_rate", "spo2",
              "glucose", "creatinine", "platelets", "hematocrit", "lactate")
ICU_MISSING = ("heart_rate", "systolic_bp", "temperature", "bun", "wbc", "potassium", "bilirubin", "gcs")
ICU_DRUGS = ("vent", "vaso", "dobutamine", "dopamine", "epinephrine", "milrinone", "norepinephrine",
             "phenylephrine", "vasopressin", "colloid_bolus", "crystalloid_bolus", "niv")
ICU_ETHNICITIES = ("White", "Black/African American", "Hispanic OR Latino", "Asian", "Asian - Chinese",
                   "Other", "Unknown/not specified", "Unable to obtain", "Patient declined to answer",
                   "Guatemalan", "Honduran")
ICU_ETHNICITY_P = (0.69, 0.09, 0.035, 0.02, 0.008, 0.025, 0.1, 0.02, 0.0085, 0.0025, 0.001)
ICU_INSURANCE = ("Medicare", "Private", "Medicaid", "Government", "Self Pay")
ICU_INSURANCE_P = (0.55, 0.32, 0.09, 0.03, 0.01)


def icu_dataset(n: int = 34386, seed: int = 0) -> Dataset:
    """ICU-mortality-shaped table: 40 raw features and 10 audit attributes.

    Features are 20 vitals/labs (8 with missing cells), 12 intervention flags,
    and 8 categorical columns. Attributes include missingness flags,
    interventions, demographics, and a hidden care site.
    """
    rng = np.random.default_rng(seed)
    site = rng.integers(0, 3, n)
    severity = rng.normal(size=n) + 0.3 * site
    age = np.clip(rng.normal(64, 17, n), 16, 95)
    ethnicity = rng.choice(len(ICU_ETHNICITIES), size=n, p=ICU_ETHNICITY_P)
    insurance = np.where(age > 65, 0, rng.choice(len(ICU_INSURANCE), size=n, p=ICU_INSURANCE_P))
    gender = rng.integers(0, 2, n)

    columns: dict[str, np.ndarray] = {}
    schema: list[ColumnSchema] = []

    def add(name, values, role="feature", kind="continuous"):
        schema.append(ColumnSchema(name, role, kind))
        columns[name] = values if kind == "continuous" else make_column(list(values), kind)

    missing = {}
    for i, v in enumerate(ICU_VITALS):
        base = rng.normal(size=n) + (0.6 if i % 3 == 0 else 0.2) * severity + 0.15 * site
        if v == "age":
            base = age
        if v in ICU_MISSING:
            rate = 0.03 + 0.04 * (site == (i % 3)) + 0.02 * (severity < -1)
            m = rng.random(n) < rate
            missing[v] = m
            base = np.where(m, np.nan, base)
        add(v, base.astype(np.float64))
    drugs = {}
    for i, d in enumerate(ICU_DRUGS):
        p = 1 / (1 + np.exp(-(-2.0 + 0.9 * severity + 0.25 * (site == i % 3))))
        drugs[d] = (rng.random(n) < p).astype(int)
        add(d, drugs[d].astype(np.float64))
    add("ethnicity", [ICU_ETHNICITIES[k] for k in ethnicity], kind="categorical")
    add("insurance", [ICU_INSURANCE[k] for k in insurance], kind="categorical")
    add("gender", ["F" if g else "M" for g in gender], kind="categorical")
    add("admission_type", rng.choice(["EMERGENCY", "ELECTIVE", "URGENT"], n, p=[0.8, 0.15, 0.05]), kind="categorical")
    add("first_careunit", rng.choice(["MICU", "SICU", "CCU", "CSRU", "TSICU"], n), kind="categorical")
    add("marital_status", rng.choice(["MARRIED", "SINGLE", "WIDOWED", "DIVORCED"], n), kind="categorical")
    add("language", rng.choice(["ENGL", "SPAN", "OTHER"], n, p=[0.9, 0.06, 0.04]), kind="categorical")
    add("religion", rng.choice(["CATHOLIC", "NONE", "PROTESTANT", "JEWISH", "OTHER"], n), kind="categorical")

    attrs = {
        "attr_temperature_missing": missing["temperature"].astype(int),
        "attr_heart_rate_missing": missing["heart_rate"].astype(int),
        "attr_gcs_missing": missing["gcs"].astype(int),
        "attr_vent": drugs["vent"],
        "attr_norepinephrine": drugs["norepinephrine"],
        "attr_site": site,
        "attr_gender": gender,
    }
    for name, v in attrs.items():
        add(name, [str(int(x)) for x in v], role="attribute", kind="categorical")
    add("attr_ethnicity", [ICU_ETHNICITIES[k] for k in ethnicity], role="attribute", kind="categorical")
    add("attr_insurance", [ICU_INSURANCE[k] for k in insurance], role="attribute", kind="categorical")
    add("attr_age", age.astype(np.float64), role="attribute", kind="continuous")

    risk = -2.4 + 0.9 * severity + 0.02 * (age - 64) + 0.3 * drugs["vent"]
    died = (rng.random(n) < 1 / (1 + np.exp(-risk))).astype(int)
    add("died", [str(x) for x in died], role="label", kind="categorical")
    return Dataset(columns, tuple(schema))
