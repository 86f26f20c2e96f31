import numpy as np
import pytest
from hypothesis import given, strategies as st

from shortcut_audit.dataset import CategoricalSeries
from shortcut_audit.models import (FAMILIES, LogisticModel, MLPModel, PredictorSpec, fit, mlp_loss_and_grads)


def separable(rng, n=200):
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    X[y == 1] += 0.5  # open a margin
    X[y == 0] -= 0.5
    return X, y


def test_logistic_separable(rng):
    X, y = separable(rng)
    m = fit(PredictorSpec("logistic_regression", {"epochs": 500}), X, y)
    assert np.mean(m.predict(X) == y) == 1.0


def test_tree_memorizes_distinct_rows():
    X = np.arange(16, dtype=float).reshape(8, 2)
    y = np.array([0, 1, 1, 0, 2, 0, 1, 2])
    m = fit(PredictorSpec("decision_tree", {"max_depth": 100, "min_leaf": 1}), X, y)
    assert m.predict(X).tolist() == y.tolist()


def test_naive_bayes_pure_feature(rng):
    y = rng.integers(0, 2, 300)
    X = np.column_stack([y * 10.0 + rng.normal(0, 0.1, 300), rng.normal(size=300)])
    assert np.mean(fit(PredictorSpec("naive_bayes"), X, y).predict(X) == y) == 1.0


def test_naive_bayes_binary_columns(rng):
    y = rng.integers(0, 2, 300)
    X = np.column_stack([y, rng.integers(0, 2, 300)]).astype(float)
    m = fit(PredictorSpec("naive_bayes"), X, y)
    assert m.binary.tolist() == [True, True]
    assert np.mean(m.predict(X) == y) == 1.0


@pytest.mark.parametrize("family", FAMILIES)
def test_single_class_predicts_zero(family, rng):
    X = rng.normal(size=(20, 3))
    m = fit(PredictorSpec(family, {"epochs": 2} if family in ("mlp", "logistic_regression") else {}), X,
            np.zeros(20, dtype=int))
    assert m.predict(X).tolist() == [0] * 20
    assert np.allclose(m.predict_proba(X), 1.0)


def test_tie_breaks_to_lowest_code():
    m = LogisticModel.from_weights(np.zeros((2, 2)), np.zeros(2))
    assert m.predict_proba([[1.0, 3.0]]).tolist() == [[0.5, 0.5]]
    assert m.predict([[1.0, 3.0]]).tolist() == [0]


def test_linear_score_by_hand():
    # class-1 score is x0 - x1, class-0 score is 0
    m = LogisticModel.from_weights([[0.0, 1.0], [0.0, -1.0]], [0.0, 0.0])
    assert m.predict([[2.0, 0.0], [0.0, 2.0]]).tolist() == [1, 0]


def _mlp(rng, n=60, d=4, C=3, hidden=16):
    X = rng.normal(size=(n, d))
    y = rng.integers(0, C, n)
    y[:C] = np.arange(C)
    return X, y, fit(PredictorSpec("mlp", {"hidden": hidden, "epochs": 5}), X, y)


def test_mlp_zero_head_is_uniform(rng):
    X, y, m = _mlp(rng)
    z = MLPModel(m.spec, 3, 4, m.present, m.W1, m.b1, np.zeros_like(m.W2), np.zeros(3), m.mean, m.std)
    assert np.allclose(z.predict_proba(X), 1 / 3)


def test_mlp_representation_shape_and_head(rng):
    X, y, m = _mlp(rng)
    R = m.representation(X[:5])
    assert R.shape == (5, 16)
    assert np.allclose(m.head(m.representation(X)), m.predict_proba(X), atol=1e-12)
    same = m.representation(np.repeat(X[:1], 3, axis=0))
    assert np.array_equal(same[0], same[2])


@pytest.mark.parametrize("family", ["logistic_regression", "decision_tree", "naive_bayes"])
def test_non_mlp_has_no_representation(family, rng):
    X, y = separable(rng, 40)
    m = fit(PredictorSpec(family, {"epochs": 5} if family == "logistic_regression" else {}), X, y)
    assert not m.has_representation
    with pytest.raises(TypeError):
        m.representation(X)


def test_mlp_gradients_match_finite_differences(rng):
    d, h, C, n = 3, 5, 3, 7
    params = {"W1": rng.normal(size=(d, h)), "b1": rng.normal(size=h),
              "W2": rng.normal(size=(h, C)), "b2": rng.normal(size=C)}
    X = rng.normal(size=(n, d))
    Y = np.eye(C)[rng.integers(0, C, n)]
    w = rng.uniform(0.5, 2, n)
    _, g = mlp_loss_and_grads(params, X, Y, w, l2=0.01)
    eps = 1e-6
    for k, v in params.items():
        num = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + eps
            lp, _ = mlp_loss_and_grads(params, X, Y, w, l2=0.01)
            v[idx] = old - eps
            lm, _ = mlp_loss_and_grads(params, X, Y, w, l2=0.01)
            v[idx] = old
            num[idx] = (lp - lm) / (2 * eps)
        assert np.allclose(g[k], num, atol=1e-7), k


@pytest.mark.parametrize("family", FAMILIES)
def test_fit_is_deterministic_and_row_order_invariant(family, rng):
    X = rng.normal(size=(120, 3))
    y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 1)
    spec = PredictorSpec(family, {"epochs": 3} if family in ("mlp", "logistic_regression") else {}, seed=4)
    a, b = fit(spec, X, y), fit(spec, X, y)
    assert a.parameter_hash() == b.parameter_hash()
    perm = rng.permutation(120)
    c = fit(spec, X[perm], y[perm])
    assert np.allclose(c.predict_proba(X), a.predict_proba(X), atol=1e-12)


def test_absent_class_gets_zero_probability(rng):
    X = rng.normal(size=(30, 2))
    y = CategoricalSeries(rng.integers(0, 2, 30) * 2, ("a", "b", "c"))  # class 1 never occurs
    for family in FAMILIES:
        m = fit(PredictorSpec(family, {"epochs": 2} if family in ("mlp", "logistic_regression") else {}), X, y)
        p = m.predict_proba(X)
        assert p.shape == (30, 3) and np.all(p[:, 1] == 0)


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit(PredictorSpec("naive_bayes"), np.array([[np.nan]]), [0])
    with pytest.raises(ValueError):
        fit(PredictorSpec("naive_bayes"), np.zeros((2, 1)), [0, 5])
    with pytest.raises(ValueError):
        fit(PredictorSpec("naive_bayes"), np.zeros((3, 1)), [0, 1])
    with pytest.raises(ValueError):
        PredictorSpec("svm")
    with pytest.raises(ValueError):
        PredictorSpec("mlp", {"depth": 3})


def test_predict_checks_width(rng):
    X, y = separable(rng, 20)
    m = fit(PredictorSpec("naive_bayes"), X, y)
    with pytest.raises(ValueError):
        m.predict(np.zeros((2, 3)))


@given(st.sampled_from(FAMILIES), st.integers(0, 10_000), st.integers(2, 4))
def test_probabilities_are_row_stochastic(family, seed, C):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 3)) * rng.uniform(0.1, 100)
    y = rng.integers(0, C, 40)
    hp = {"epochs": 2} if family in ("mlp", "logistic_regression") else {}
    p = fit(PredictorSpec(family, hp, seed), X, y).predict_proba(X)
    assert np.all(p >= 0) and np.allclose(p.sum(axis=1), 1.0)
