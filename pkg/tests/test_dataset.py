import numpy as np
import pytest
from hypothesis import given, strategies as st

from shortcut_audit.dataset import (MISSING_PLACEHOLDER, CategoricalSeries, ColumnSchema, Dataset, DatasetError,
                                    encode_features, load_csv, make_column, rows_with_all_attributes,
                                    rows_with_attribute, write_csv)

SCHEMA = (
    ColumnSchema("hr", "feature"),
    ColumnSchema("race", "attribute", "categorical"),
    ColumnSchema("died", "label", "categorical"),
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_small_csv(tmp_path):
    p = write(tmp_path, "hr,race,died\n80,white,0\n95,,1\n70.5,black,0\n")
    ds = load_csv(p, SCHEMA)
    assert ds.n_rows == 3
    assert ds.raw_feature_names == ("hr",)
    assert ds.attribute_names == ("race",)
    assert ds.columns["race"][1] is None
    assert ds.columns["hr"].dtype == np.float64


def test_load_errors(tmp_path):
    with pytest.raises(DatasetError, match="not found"):
        load_csv(tmp_path / "nope.csv", SCHEMA)
    with pytest.raises(DatasetError, match="empty"):
        load_csv(write(tmp_path, ""), SCHEMA)
    with pytest.raises(DatasetError, match="duplicate"):
        load_csv(write(tmp_path, "hr,hr,died\n1,2,0\n"), SCHEMA)
    with pytest.raises(DatasetError, match="header mismatch"):
        load_csv(write(tmp_path, "hr,ethnicity,died\n1,a,0\n"), SCHEMA)
    with pytest.raises(DatasetError, match=r"row 3, column 'hr'"):
        load_csv(write(tmp_path, "hr,race,died\n1,a,0\nabc,b,1\n"), SCHEMA)


def test_schema_invariants():
    with pytest.raises(DatasetError, match="label"):
        Dataset({"x": np.zeros(2)}, (ColumnSchema("x", "feature"),))
    with pytest.raises(DatasetError, match="feature"):
        Dataset({"y": np.zeros(2)}, (ColumnSchema("y", "label"),))
    with pytest.raises(DatasetError):
        ColumnSchema("x", "predictor")


def test_custom_missing_token(tmp_path):
    schema = (ColumnSchema("hr", "feature", missing_token="NA"), ColumnSchema("died", "label", "categorical"))
    ds = load_csv(write(tmp_path, "hr,died\nNA,0\n3,1\n"), schema)
    assert np.isnan(ds.columns["hr"][0])


def test_csv_round_trip(tmp_path):
    cols = {"hr": make_column([80.25, None, 1e-9], "continuous"), "race": make_column(["a", None, "b,c"], "categorical"),
            "died": make_column(["0", "1", "0"], "categorical")}
    ds = Dataset(cols, SCHEMA)
    write_csv(ds, tmp_path / "out.csv")
    back = load_csv(tmp_path / "out.csv", SCHEMA)
    assert back.fingerprint == ds.fingerprint


def test_encode_continuous_missing():
    cols = {"temp": make_column([36.6, None, 37.1], "continuous"), "y": make_column(["0", "1", "0"], "categorical")}
    ds = Dataset(cols, (ColumnSchema("temp", "feature"), ColumnSchema("y", "label", "categorical")))
    enc = encode_features(ds)
    assert enc.feature_names == ("temp", "temp missing")
    assert enc.features[:, 0].tolist() == [36.6, MISSING_PLACEHOLDER, 37.1]
    assert enc.features[:, 1].tolist() == [0, 1, 0]
    assert np.isfinite(enc.features).all()


def test_encode_complete_column_has_no_indicator():
    cols = {"x": make_column([1, 2, 3], "continuous"), "y": make_column(["0", "1", "0"], "categorical")}
    enc = encode_features(Dataset(cols, (ColumnSchema("x", "feature"), ColumnSchema("y", "label", "categorical"))))
    assert enc.feature_names == ("x",)


@given(st.lists(st.sampled_from(["a", "b", "c", None]), min_size=1, max_size=40))
def test_one_hot_groups_sum_to_one(values):
    cols = {"c": make_column(values, "categorical"), "y": make_column(["0"] * len(values), "categorical")}
    enc = encode_features(Dataset(cols, (ColumnSchema("c", "feature", "categorical"),
                                         ColumnSchema("y", "label", "categorical"))))
    assert np.all(enc.features.sum(axis=1) == 1.0)
    assert set(np.unique(enc.features)) <= {0.0, 1.0}


def test_encode_idempotent_and_immutable():
    cols = {"c": make_column(["a", "b"], "categorical"), "y": make_column(["0", "1"], "categorical")}
    enc = encode_features(Dataset(cols, (ColumnSchema("c", "feature", "categorical"),
                                         ColumnSchema("y", "label", "categorical"))))
    assert encode_features(enc) is enc
    assert enc.feature_names == ("c=a", "c=b")
    with pytest.raises(ValueError):
        enc.features[0, 0] = 5.0


def test_encode_rejects_identifier_columns():
    ids = [str(i) for i in range(1001)]
    cols = {"id": make_column(ids, "categorical"), "y": make_column(["0"] * 1001, "categorical")}
    ds = Dataset(cols, (ColumnSchema("id", "feature", "categorical"), ColumnSchema("y", "label", "categorical")))
    with pytest.raises(DatasetError, match="identifier"):
        encode_features(ds)


def _attr_ds(values, kind="categorical"):
    n = len(values)
    cols = {"x": np.zeros(n), "a": make_column(values, kind), "b": make_column(["u"] * (n - 1) + [None], "categorical"),
            "y": make_column(["0"] * n, "categorical")}
    schema = (ColumnSchema("x", "feature"), ColumnSchema("a", "attribute", kind),
              ColumnSchema("b", "attribute", "categorical"), ColumnSchema("y", "label", "categorical"))
    return Dataset(cols, schema)


def test_rows_with_attribute():
    assert rows_with_attribute(_attr_ds(["x", None, "y"]), "a").tolist() == [0, 2]
    assert rows_with_attribute(_attr_ds(list("abcde")), "a").tolist() == [0, 1, 2, 3, 4]
    assert rows_with_attribute(_attr_ds([None, None, None]), "a").size == 0
    with pytest.raises(DatasetError):
        rows_with_attribute(_attr_ds(["x"]), "zzz")


def test_strict_missing_policy():
    ds = _attr_ds(["x", None, "y", "z"])
    assert rows_with_all_attributes(ds, ["a", "b"]).tolist() == [0, 2]


def test_categorical_series_contract():
    s = CategoricalSeries.from_labels(["b", "a", "b"])
    assert s.names == ("a", "b") and s.codes.tolist() == [1, 0, 1]
    assert s.counts().tolist() == [1, 2]
    with pytest.raises(ValueError):
        CategoricalSeries([0, 2], ("a", "b"))
    with pytest.raises(ValueError):
        s.codes[0] = 0


def test_fingerprint_changes_with_content():
    a = _attr_ds(["x", "y"])
    b = _attr_ds(["x", "z"])
    assert a.fingerprint != b.fingerprint
    assert a.fingerprint == _attr_ds(["x", "y"]).fingerprint
