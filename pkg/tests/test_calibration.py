import numpy as np
import pytest
from hypothesis import given, strategies as st

from shortcut_audit.calibration import (ARTIFACT_COLUMN, CSV_COLUMNS, CalibrationConfig, inject_synthetic,
                                        make_correlated, make_counterfactual, run_calibration, t_interval)
from shortcut_audit.dataset import Dataset, DatasetError, make_column
from shortcut_audit.models import LogisticModel, PredictorSpec
from shortcut_audit.metrics import auc
from shortcut_audit.synthgen import task_dataset

FAST_MLP = PredictorSpec("mlp", {"epochs": 5, "hidden": 16})


def test_injection_examples():
    ds = task_dataset(2000, 0)
    y = np.asarray([int(v) for v in ds.label])
    inj = inject_synthetic(ds, 0.0, 1)
    assert np.array_equal(inj.attribute.codes, y)
    assert inj.utility.ami == pytest.approx(1.0)
    assert inj.dataset.feature_names[-1] == ARTIFACT_COLUMN
    assert np.array_equal(inj.dataset.features[:, -1], inj.attribute.codes)
    near = inject_synthetic(task_dataset(20_000, 0), 0.499, 1)
    assert abs(near.utility.ami) < 0.01


@given(st.floats(0.0, 0.4999), st.integers(0, 10_000))
def test_injection_flips_exact_count(frac, seed):
    ds = task_dataset(300, 3)
    y = np.asarray([int(v) for v in ds.label])
    inj = inject_synthetic(ds, frac, seed)
    assert int((inj.attribute.codes != y).sum()) == int(np.floor(frac * 300)) == inj.flipped.size


def test_flipped_rows_mode_marks_only_flips():
    ds = task_dataset(400, 3)
    inj = inject_synthetic(ds, 0.2, 0, mode="flipped_rows")
    col = inj.dataset.features[:, -1]
    assert np.flatnonzero(col).tolist() == inj.flipped.tolist()


def test_utility_decreases_with_flip_fraction():
    ds = task_dataset(5000, 1)
    u = [inject_synthetic(ds, f, 7).utility.ami for f in (0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.45)]
    assert all(a > b for a, b in zip(u, u[1:]))


def test_injection_errors():
    ds = task_dataset(100, 0)
    with pytest.raises(ValueError):
        inject_synthetic(ds, 0.5, 0)
    cols = dict(ds.columns)
    cols[ds.label_name] = make_column([str(i % 3) for i in range(100)], "categorical")
    with pytest.raises(DatasetError, match="binary"):
        inject_synthetic(Dataset(cols, ds.schema), 0.1, 0)


def test_counterfactual_examples():
    X = np.array([[5.0, 0.0], [6.0, 1.0], [7.0, 0.0]])
    y = np.array([0, 1, 0])
    cf = make_counterfactual(X, y)
    assert cf[:, 1].tolist() == [1.0, 0.0, 1.0]
    assert cf[:, 0].tolist() == X[:, 0].tolist()
    assert np.array_equal(make_correlated(cf, y), X)
    with pytest.raises(ValueError):
        make_counterfactual(np.zeros(3), y)


def test_artifact_only_model_bounds():
    # a model that reads only the artifact column is perfect on the correlated set and inverted on the other
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 200)
    X = np.column_stack([rng.normal(size=200), y.astype(float)])
    m = LogisticModel.from_weights([[0.0, 0.0], [-5.0, 5.0]], [2.5, -2.5])
    assert auc(m.predict_proba(X)[:, 1], y) == 1.0
    assert auc(m.predict_proba(make_counterfactual(X, y))[:, 1], y) == 0.0


def test_t_interval():
    lo, hi = t_interval([0.7, 0.8, 0.9])
    # mean 0.8, sd 0.1, t(0.975, 2) = 4.302653
    assert (lo + hi) / 2 == pytest.approx(0.8)
    assert hi - lo == pytest.approx(2 * 4.302653 * 0.1 / np.sqrt(3), rel=1e-6)
    assert t_interval([0.5]) == (0.5, 0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        CalibrationConfig(flip_fractions=(0.3, 0.1))
    with pytest.raises(ValueError):
        CalibrationConfig(flip_fractions=(0.5,))
    with pytest.raises(ValueError):
        CalibrationConfig(folds=1)


def test_calibration_curve_shape():
    cfg = CalibrationConfig(flip_fractions=(0.0, 0.2, 0.45), task_model=FAST_MLP)
    curve = run_calibration(task_dataset(2000, 0), cfg)
    assert [r.flip_fraction for r in curve.rows] == [0.0, 0.2, 0.45]
    assert all(r.error is None for r in curve.rows)
    first, last = curve.rows[0], curve.rows[-1]
    assert first.auc_drop > 0.3
    assert first.auc_correlated >= last.auc_correlated - 0.02
    assert len(first.csv_row()) == len(CSV_COLUMNS)
    for r in curve.rows:
        assert len(r.fold_auc_correlated) == 3
        assert r.ci_drop[0] <= np.mean(np.subtract(r.fold_auc_correlated, r.fold_auc_counterfactual)) <= r.ci_drop[1]


def test_without_artifact_drop_is_exactly_zero():
    cfg = CalibrationConfig(flip_fractions=(0.0, 0.3), task_model=FAST_MLP, use_artifact=False)
    curve = run_calibration(task_dataset(1000, 0), cfg)
    for r in curve.rows:
        assert r.auc_drop == 0.0
        assert r.auc_correlated == r.auc_counterfactual


def test_calibration_is_deterministic():
    cfg = CalibrationConfig(flip_fractions=(0.1,), task_model=FAST_MLP, seed=3)
    a = run_calibration(task_dataset(600, 0), cfg).to_dict()
    b = run_calibration(task_dataset(600, 0), cfg).to_dict()
    assert a == b
