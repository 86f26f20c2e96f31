import numpy as np
import pytest
from hypothesis import given, strategies as st

import shortcut_audit.audit as audit_mod
from shortcut_audit.audit import (AuditSettings, InsufficientData, compute_utility, cross_val_predict, derive_seed,
                                  detect_conditioned, detect_unconditioned, plan_folds, run_audit)
from shortcut_audit.dataset import CategoricalSeries, ColumnSchema, Dataset, make_column
from shortcut_audit.infotheory import ami_of
from shortcut_audit.models import FAMILIES, PredictorSpec
from shortcut_audit.synthgen import (ChannelSpec, chain_dataset, channel_dataset, collider_dataset,
                                     detectability_suite, shortcut_dataset)

NB = PredictorSpec("naive_bayes")
FAST = {"mlp": {"epochs": 10}}


def spec(family):
    return PredictorSpec(family, FAST.get(family, {}))


def with_label(ds, values):
    cols = dict(ds.columns)
    cols[ds.label_name] = make_column(values, "categorical")
    return Dataset(cols, ds.schema)


# --- folds ---------------------------------------------------------------

def test_fold_size_examples():
    assert plan_folds(10, 5, seed=0).sizes().tolist() == [2] * 5
    assert sorted(plan_folds(10, 3, seed=0).sizes().tolist()) == [3, 3, 4]
    key = CategoricalSeries(np.repeat([0, 1], [70, 30]), ("a", "b"))
    plan = plan_folds(100, 5, key, seed=1)
    for f in range(5):
        _, te = plan.split(f)
        assert np.bincount(key.codes[te], minlength=2).tolist() == [14, 6]


def test_fold_errors_and_warnings():
    with pytest.raises(ValueError):
        plan_folds(3, 4)
    with pytest.raises(ValueError):
        plan_folds(10, 1)
    key = CategoricalSeries(np.array([0] * 20 + [1, 1]), ("a", "b"))
    assert any("'b'" in w for w in plan_folds(22, 3, key).warnings)


@given(st.lists(st.integers(0, 3), min_size=6, max_size=200), st.integers(2, 6), st.integers(0, 99))
def test_fold_plan_properties(codes, k, seed):
    n = len(codes)
    if k > n:
        return
    key = CategoricalSeries(np.asarray(codes), ("a", "b", "c", "d"))
    plan = plan_folds(n, k, key, seed)
    sizes = plan.sizes()
    assert sizes.sum() == n and sizes.max() - sizes.min() <= 1
    for c in range(4):
        per = np.bincount(plan.assignment[key.codes == c], minlength=k)
        assert per.max() - per.min() <= 1
    assert np.array_equal(plan_folds(n, k, key, seed).assignment, plan.assignment)


# --- out-of-fold predictions ---------------------------------------------

def test_copied_feature_is_recovered():
    rng = np.random.default_rng(0)
    a = CategoricalSeries(rng.integers(0, 3, 300), ("x", "y", "z"))
    X = np.column_stack([a.codes.astype(float), rng.normal(size=300)])
    for family in FAMILIES:
        pred = cross_val_predict(X, a, PredictorSpec(family), plan_folds(300, 3, a, 0))
        assert ami_of(a, pred).ami > 0.98, family


def test_null_attribute_is_near_zero():
    rng = np.random.default_rng(1)
    a = CategoricalSeries(rng.integers(0, 2, 5000), ("0", "1"))
    X = rng.normal(size=(5000, 3))
    pred = cross_val_predict(X, a, NB, plan_folds(5000, 3, a, 0))
    assert abs(ami_of(a, pred).ami) < 0.02


def test_no_row_is_predicted_by_a_model_that_saw_it(monkeypatch):
    seen = []
    real_fit = audit_mod.fit

    def spy(spec, X, y, n_classes=None):
        seen.append(set(X[:, 0].astype(int).tolist()))
        return real_fit(spec, X, y, n_classes)

    monkeypatch.setattr(audit_mod, "fit", spy)
    n = 60
    a = CategoricalSeries(np.arange(n) % 2, ("0", "1"))
    X = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])  # column 0 is the row id
    plan = plan_folds(n, 3, a, 5)
    cross_val_predict(X, a, NB, plan)
    assert len(seen) == 3
    for f, train_ids in enumerate(seen):
        _, te = plan.split(f)
        assert train_ids.isdisjoint(te.tolist())
        assert len(train_ids) + te.size == n


def test_two_fold_swap():
    # a fold-0 model trained on fold 1 only sees rows labelled 1, so it predicts 1 everywhere
    a = CategoricalSeries(np.array([0, 0, 1, 1]), ("0", "1"))
    plan = audit_mod.FoldPlan(2, np.array([0, 0, 1, 1]))
    pred = cross_val_predict(np.zeros((4, 1)), a, NB, plan)
    assert pred.codes.tolist() == [1, 1, 0, 0]


# --- detectability -------------------------------------------------------

@pytest.mark.parametrize("family", FAMILIES)
def test_literal_feature_detectability(family):
    det = detect_unconditioned(detectability_suite(1500, 0), "a0", spec(family))
    assert det.score.ami >= 0.95


def test_channel_noise_orders_detectability():
    scores = [detect_unconditioned(channel_dataset(20_000, ChannelSpec(p), 3), "a", NB).score.ami
              for p in (0.0, 0.1, 0.4)]
    assert scores[0] > scores[1] > scores[2]


def test_collider_unconditioned_is_null():
    assert abs(detect_unconditioned(collider_dataset(5000, 0), "a", NB).score.ami) < 0.03


def test_chain_conditioning_removes_label_leakage():
    ds = chain_dataset(5000, 0)
    unc = detect_unconditioned(ds, "a", NB).score.ami
    con = detect_conditioned(ds, "a", NB)
    assert unc > 0.2
    assert abs(con.score.ami) < 0.05
    assert con.score.ami - unc <= -0.2
    # the pooled score still shows the label route; only the conditional score removes it
    assert con.pooled.ami > 0.1


def test_direct_path_conditioning_changes_little():
    ds = channel_dataset(5000, ChannelSpec(0.1, 1, 1), 2)
    unc = detect_unconditioned(ds, "a", NB).score.ami
    con = detect_conditioned(ds, "a", NB).score.ami
    assert abs(con - unc) < 0.05


def test_single_label_value_conditioning_is_identity():
    ds = channel_dataset(600, ChannelSpec(0.2, 2, 1), 4)
    ds = with_label(ds, ["0"] * ds.n_rows)
    a = detect_unconditioned(ds, "a", NB, replicates=20)
    b = detect_conditioned(ds, "a", NB, replicates=20)
    assert a.score == b.score and a.ci == b.ci
    assert np.array_equal(a.predictions, b.predictions)


def test_detection_needs_enough_rows():
    with pytest.raises(InsufficientData):
        detect_unconditioned(channel_dataset(25, ChannelSpec(), 0), "a", NB)


def test_small_label_partition_is_dropped_with_warning():
    ds = channel_dataset(400, ChannelSpec(0.1), 1)
    ds = with_label(ds, ["0"] * 390 + ["1"] * 10)
    det = detect_conditioned(ds, "a", NB)
    assert (det.predictions == -1).sum() == 10
    assert any("excluded" in w for w in det.warnings)


# --- utility -------------------------------------------------------------

def test_utility_examples():
    rng = np.random.default_rng(0)
    y = CategoricalSeries(rng.integers(0, 2, 500), ("0", "1"))
    s, ci = compute_utility(y, y, 200, 0)
    assert s.ami == pytest.approx(1.0) and ci == pytest.approx((1.0, 1.0))
    a = CategoricalSeries(rng.integers(0, 2, 10_000), ("0", "1"))
    b = CategoricalSeries(rng.integers(0, 2, 10_000), ("0", "1"))
    s, ci = compute_utility(a, b, 300, 0)
    assert abs(s.ami) < 0.01
    # the basic interval reflects the upward bootstrap bias of MI, so at the null its
    # upper end can dip just below 0; it stays in a tight band around 0 with a negative lower end
    assert ci[0] < 0 and max(abs(ci[0]), abs(ci[1])) < 0.01


def test_utility_degenerate_and_short():
    w = []
    one = CategoricalSeries(np.zeros(30, dtype=int), ("x",))
    y = CategoricalSeries(np.arange(30) % 2, ("0", "1"))
    s, ci = compute_utility(one, y, 10, 0, warnings=w)
    assert s.ami == 0.0 and ci == (0.0, 0.0) and w
    with pytest.raises(InsufficientData):
        compute_utility(y.take(np.arange(10)), y.take(np.arange(10)), 10, 0)


def test_utility_symmetric_and_relabel_invariant():
    rng = np.random.default_rng(3)
    a = rng.integers(0, 3, 800)
    y = (a + (rng.random(800) < 0.4)) % 2
    A = CategoricalSeries(a, ("p", "q", "r"))
    Y = CategoricalSeries(y, ("0", "1"))
    s1, _ = compute_utility(A, Y, 0, 0)
    s2, _ = compute_utility(Y, A, 0, 0)
    s3, _ = compute_utility(CategoricalSeries((a + 1) % 3, ("p", "q", "r")), Y, 0, 0)
    assert s1.ami == pytest.approx(s2.ami, abs=1e-12) == pytest.approx(s3.ami, abs=1e-12)


def test_bootstrap_ci_is_basic():
    theta = 0.3
    reps = np.linspace(0.2, 0.5, 1001)
    lo, hi = audit_mod.basic_bootstrap_ci(theta, reps)
    q_lo, q_hi = np.quantile(reps, [0.025, 0.975])
    assert (lo, hi) == pytest.approx((2 * theta - q_hi, 2 * theta - q_lo))


# --- full audit ----------------------------------------------------------

def small_settings(**kw):
    base = dict(models=("naive_bayes", "decision_tree"), bootstrap_replicates=50, detectability_replicates=20)
    base.update(kw)
    return AuditSettings(**base)


def test_planted_attribute_ranked_first():
    rep = run_audit(shortcut_dataset(3000, 0), small_settings())
    assert [a.attribute for a in rep.attributes] == ["planted", "noise"]
    planted = rep.get("planted")
    assert planted.detectability_ensemble > 0.95
    assert planted.detectability_ensemble == max(s.ami for s in planted.detectability.values())
    assert 0.25 < planted.utility.ami < 0.4


def test_empty_attribute_list():
    rep = run_audit(shortcut_dataset(300, 0), small_settings(attributes=()))
    assert rep.attributes == [] and rep.warnings


def test_failures_are_recorded_per_attribute():
    ds = shortcut_dataset(300, 0)
    cols = dict(ds.columns)
    cols["blank"] = make_column([None] * ds.n_rows, "categorical")
    schema = ds.schema[:-1] + (ColumnSchema("blank", "attribute", "categorical"), ds.schema[-1])
    rep = run_audit(Dataset(cols, schema), small_settings())
    assert len(rep.attributes) == 3
    assert rep.get("blank").error and rep.get("planted").error is None
    assert rep.attributes[-1].attribute == "blank"


def test_unknown_attribute_rejected():
    with pytest.raises(ValueError):
        run_audit(shortcut_dataset(300, 0), small_settings(attributes=("nope",)))


def test_anticausal_report_keeps_pooled_score():
    rep = run_audit(chain_dataset(2000, 1), small_settings(direction="anticausal_y_to_x"))
    a = rep.get("a")
    assert set(a.detectability_pooled) == {"naive_bayes", "decision_tree"}
    assert a.detectability_ensemble < 0.05 < a.detectability_pooled["naive_bayes"]


def test_audit_is_deterministic():
    ds = shortcut_dataset(600, 2)
    a = run_audit(ds, small_settings(seed=9)).to_dict()
    b = run_audit(ds, small_settings(seed=9)).to_dict()
    assert a == b


def test_derive_seed_is_stable():
    assert derive_seed(0, "a", "mlp", 1) == derive_seed(0, "a", "mlp", 1)
    assert derive_seed(0, "a", "mlp", 1) != derive_seed(0, "a", "mlp", 2)
    assert 0 <= derive_seed(123, "x") < 2**63
