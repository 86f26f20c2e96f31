import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shortcut_audit.dataset import CategoricalSeries, encode_features, load_csv, write_csv
from shortcut_audit.infotheory import ami_of, mutual_information, contingency
from shortcut_audit.synthgen import (ChannelSpec, JointSpec, chain_dataset, chain_truth, collider_dataset,
                                     collider_joint, collider_truth, detectability_suite, icu_dataset,
                                     noise_features, sample_joint, shortcut_dataset, task_dataset)
from oracles import entropy_ref


def hb(p):
    return entropy_ref([p, 1 - p]) if 0 < p < 1 else 0.0


def test_joint_analytic_examples():
    assert JointSpec([[0.25, 0.25], [0.25, 0.25]]).analytic_mi == pytest.approx(0.0, abs=1e-15)
    assert JointSpec([[0.5, 0], [0, 0.5]]).analytic_mi == pytest.approx(math.log(2))
    # symmetric channel with crossover 0.2 and uniform input: ln 2 - H_b(0.2)
    mi = JointSpec([[0.4, 0.1], [0.1, 0.4]]).analytic_mi
    assert mi == pytest.approx(math.log(2) - hb(0.2), abs=1e-12)
    assert mi == pytest.approx(0.192745, abs=1e-6)


def test_joint_rejects_invalid():
    with pytest.raises(ValueError):
        JointSpec([[0.5, 0.6]])
    with pytest.raises(ValueError):
        JointSpec([[-0.1, 1.1]])
    with pytest.raises(ValueError):
        ChannelSpec(0.6)


def test_sample_joint_deterministic_and_convergent():
    spec = JointSpec([[0.4, 0.1], [0.1, 0.4]])
    a1, y1 = sample_joint(spec, 50_000, 3)
    a2, y2 = sample_joint(spec, 50_000, 3)
    assert np.array_equal(a1.codes, a2.codes) and np.array_equal(y1.codes, y2.codes)
    emp = mutual_information(contingency(a1, y1))
    assert abs(emp - spec.analytic_mi) < 3 * math.sqrt(4 / 50_000)
    with pytest.raises(ValueError):
        sample_joint(spec, 0, 1)


def test_noise_feature_examples():
    a = np.random.default_rng(0).integers(0, 2, 1000)
    X = noise_features(a, ChannelSpec(0.0, 3, 2), 1)
    assert X.shape == (1000, 5)
    assert all(np.array_equal(X[:, j], a) for j in range(3))
    assert ChannelSpec(0.1).analytic_mi_per_copy == pytest.approx(math.log(2) - hb(0.1), abs=1e-12)
    assert ChannelSpec(0.1).analytic_mi_per_copy == pytest.approx(0.368064, abs=1e-6)
    assert ChannelSpec(0.5).analytic_mi_per_copy == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        noise_features(np.array([0, 2]), ChannelSpec(), 0)


@given(st.floats(0.0, 0.5), st.integers(0, 1000))
def test_noise_flip_rate(p, seed):
    a = np.random.default_rng(seed).integers(0, 2, 4000)
    col = noise_features(a, ChannelSpec(p), seed)[:, 0]
    assert abs(np.mean(col != a) - p) < 4 * math.sqrt(0.25 / 4000) + 1e-12


def test_chain_structure():
    ds = chain_dataset(20_000, 0)
    a = CategoricalSeries.from_labels(ds.columns["a"])
    y = CategoricalSeries.from_labels(ds.columns["y"])
    x0 = ds.columns["x0"].astype(int)
    assert ami_of(a, y).ami > 0.2
    assert mutual_information(contingency(a, x0)) > 0.05
    for v in (0, 1):
        m = y.codes == v
        assert abs(ami_of(a.codes[m], x0[m]).ami) < 0.01
    t = chain_truth()
    assert t["mi_a_y"] == pytest.approx(math.log(2) - hb(0.2))
    # two cascaded binary channels compose to crossover 0.2*0.95 + 0.8*0.05
    assert t["mi_a_x_column"] == pytest.approx(math.log(2) - hb(0.23))
    with pytest.raises(ValueError):
        chain_dataset(50, 0)


def test_collider_structure():
    ds = collider_dataset(20_000, 0)
    a = CategoricalSeries.from_labels(ds.columns["a"]).codes
    y = CategoricalSeries.from_labels(ds.columns["y"]).codes
    x0 = ds.columns["x0"].astype(int)
    assert abs(ami_of(a, x0).ami) < 0.02
    assert mutual_information(contingency(a[y == 1], x0[y == 1])) > 0.01
    p = collider_joint()
    assert p.sum() == pytest.approx(1.0)
    assert collider_truth()["mi_a_z_given_y1"] > 0.05


def test_collider_truth_by_hand():
    # within Y=1 with 10% flips: weights 0.025 for (0,0) and 0.225 for the three others
    w = np.array([[0.025, 0.225], [0.225, 0.225]])
    w /= w.sum()
    pa, pz = w.sum(1), w.sum(0)
    mi = sum(w[i, j] * math.log(w[i, j] / (pa[i] * pz[j])) for i in range(2) for j in range(2))
    assert collider_truth()["mi_a_z_given_y1"] == pytest.approx(mi, abs=1e-12)


@pytest.mark.parametrize("make", [
    lambda s: chain_dataset(500, s), lambda s: collider_dataset(500, s), lambda s: task_dataset(500, s),
    lambda s: shortcut_dataset(500, s), lambda s: detectability_suite(500, s),
])
def test_generators_deterministic_and_round_trip(make, tmp_path):
    a, b = make(7), make(7)
    assert a.fingerprint == b.fingerprint
    assert make(8).fingerprint != a.fingerprint
    write_csv(a, tmp_path / "g.csv")
    assert load_csv(tmp_path / "g.csv", a.schema).fingerprint == a.fingerprint


def test_icu_shape():
    ds = icu_dataset(2000, 0)
    assert len(ds.raw_feature_names) == 40
    assert encode_features(ds).features.shape[0] == 2000
    assert len(ds.attribute_names) == 10
    assert ds.label_name == "died"
