import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcmbias.dataset import (
    Dataset,
    DatasetError,
    FeatureSchema,
    TableSchema,
    load_csv,
    load_schema,
    normalize_numeric,
    stratified_split,
    table_schema_of,
    write_csv,
)

from conftest import DATA, CONFIGS

SCHEMA = TableSchema(
    features=(
        FeatureSchema("a", "numeric", "F1"),
        FeatureSchema("color", "nominal", "F2", protected=True),
    )
)


def toy(y, X=None):
    y = np.asarray(y)
    if X is None:
        X = np.column_stack([np.arange(len(y), dtype=float), np.zeros(len(y))])
    return Dataset(
        (FeatureSchema("a", "numeric"), FeatureSchema("b", "nominal", categories=("u",))),
        X,
        y,
        tuple(str(k) for k in range(y.max() + 1)),
    )


def test_load_maps_categories_in_first_seen_order(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1.5,red,yes\n2,blue,no\n3,red,no\n")
    ds = load_csv(p, SCHEMA)
    assert ds.n == 3 and ds.m == 2
    assert ds.schema[1].categories == ("red", "blue")
    assert ds.X[:, 1].tolist() == [0, 1, 0]
    assert ds.class_names == ("yes", "no")
    assert ds.y.tolist() == [0, 1, 1]


def test_empty_file_errors(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(DatasetError, match="no rows"):
        load_csv(p, SCHEMA)


def test_short_row_cites_row_index(tmp_path):
    schema = TableSchema(features=tuple(FeatureSchema(f"f{i}", "numeric") for i in range(20)))
    good = ",".join(["1"] * 21)
    bad = ",".join(["1"] * 19)
    lines = [good] * 5 + [bad] + [good] * 3
    p = tmp_path / "bad.csv"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError, match=r"row 5\b.*expected 21 fields, got 19"):
        load_csv(p, schema)


def test_unparseable_numeric_names_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,red,yes\nabc,red,no\n")
    with pytest.raises(DatasetError, match=r"row 1.*'a'"):
        load_csv(p, SCHEMA)


def test_recode_merges_categories(tmp_path):
    schema = TableSchema(
        features=(FeatureSchema("g", "nominal", recode={"A91": "m", "A92": "f", "A93": "m"}),),
        delimiter=" ",
    )
    p = tmp_path / "d.txt"
    p.write_text("A91 1\nA92 2\nA93 1\nA99 2\n")
    ds = load_csv(p, schema)
    assert ds.schema[0].categories == ("m", "f", "A99")
    assert ds.X[:, 0].tolist() == [0, 1, 0, 2]


def test_german_credit_loads_with_expected_class_counts():
    ds = load_csv(DATA / "german.data", load_schema(CONFIGS / "german_schema.yaml"))
    assert (ds.n, ds.m) == (1000, 20)
    counts = dict(zip(ds.class_names, np.bincount(ds.y)))
    assert counts == {"1": 700, "2": 300}
    assert ds.protected_ids == ["F9", "F13", "F20"]


def test_dataset_is_immutable():
    ds = toy([0, 1, 0, 1])
    with pytest.raises(ValueError):
        ds.X[0, 0] = 5.0


def test_normalize_examples():
    X = np.array([[2.0, 7.0], [4.0, 7.0], [6.0, 7.0]])
    ds = Dataset((FeatureSchema("a", "numeric"), FeatureSchema("b", "numeric")), X, [0, 1, 0], ("x", "y"))
    out = normalize_numeric(ds)
    assert out.X[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert out.X[:, 1].tolist() == [0.0, 0.0, 0.0]
    assert ds.X[:, 0].tolist() == [2.0, 4.0, 6.0]
    assert normalize_numeric(out) == out


def test_normalize_leaves_nominal_alone():
    X = np.array([[10.0, 1.0], [20.0, 0.0]])
    ds = Dataset((FeatureSchema("a", "numeric"), FeatureSchema("b", "nominal", categories=("p", "q"))), X, [0, 1], ("x", "y"))
    assert normalize_numeric(ds).X[:, 1].tolist() == [1.0, 0.0]


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
def test_normalize_idempotent(vals):
    ds = Dataset((FeatureSchema("a", "numeric"),), np.array(vals)[:, None], [0] * len(vals), ("c",))
    once = normalize_numeric(ds)
    assert np.all((once.X >= 0) & (once.X <= 1))
    assert normalize_numeric(once) == once


def test_round_trip(tmp_path):
    ds = load_csv(DATA / "german.data", load_schema(CONFIGS / "german_schema.yaml"))
    ds = normalize_numeric(ds)
    p = tmp_path / "g.csv"
    write_csv(ds, p)
    again = load_csv(p, table_schema_of(ds))
    assert again == ds


def test_split_default_fractions():
    y = np.array([0] * 700 + [1] * 300)
    sp = stratified_split(toy(y), (0.7, 0.2, 0.1), seed=3)
    assert (len(sp.train), len(sp.validation), len(sp.test)) == (700, 200, 100)
    for part in (sp.train, sp.validation, sp.test):
        share = np.mean(y[part] == 0)
        assert abs(share * len(part) - 0.7 * len(part)) <= 1


def test_split_bad_fractions():
    with pytest.raises(DatasetError):
        stratified_split(toy([0, 1] * 10), (0.5, 0.5, 0.5), 0)


def test_split_tiny_class_named():
    with pytest.raises(DatasetError, match="'1'"):
        stratified_split(toy([0] * 10 + [1] * 2), (0.7, 0.2, 0.1), 0)


def test_split_deterministic():
    ds = toy(np.array([0, 1, 2] * 30))
    a = stratified_split(ds, (0.7, 0.2, 0.1), 11)
    b = stratified_split(ds, (0.7, 0.2, 0.1), 11)
    for x, y in zip((a.train, a.validation, a.test), (b.train, b.validation, b.test)):
        assert np.array_equal(x, y)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(3, 200), min_size=1, max_size=5),
    st.integers(0, 2**31 - 1),
    st.tuples(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(0.05, 1.0)),
)
def test_split_partition_and_stratification(class_sizes, seed, raw):
    fr = np.array(raw) / sum(raw)
    y = np.concatenate([np.full(n, k) for k, n in enumerate(class_sizes)])
    ds = toy(y)
    sp = stratified_split(ds, tuple(fr), seed)
    parts = [sp.train, sp.validation, sp.test]
    allidx = np.concatenate(parts)
    assert len(allidx) == len(y) and len(np.unique(allidx)) == len(y)
    n = len(y)
    for part in parts:
        if len(part) == 0:
            continue
        for k, nk in enumerate(class_sizes):
            cnt = np.sum(y[part] == k)
            assert abs(cnt / len(part) - nk / n) <= 1 / len(part) + 1e-12
