import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nucate.data import (Dataset, ResultRow, SchemaError, SplitSpec, load_csv_dataset, read_results,
                         split_indices, split_train_val, write_csv_dataset, write_results)


def test_csv_roundtrip_is_exact(tmp_path, small_synthetic):
    ds, _ = small_synthetic
    write_csv_dataset(ds, tmp_path / "d.csv")
    back = load_csv_dataset(tmp_path / "d.csv", require_oracle=True)
    for name in ("x", "a", "y", "tau", "mu", "y0", "y1"):
        assert np.array_equal(getattr(back, name), getattr(ds, name))


def test_csv_without_oracle(tmp_path, toy_dataset):
    write_csv_dataset(toy_dataset.without_oracle(), tmp_path / "d.csv")
    back = load_csv_dataset(tmp_path / "d.csv")
    assert not back.has_oracle
    with pytest.raises(SchemaError, match="oracle"):
        load_csv_dataset(tmp_path / "d.csv", require_oracle=True)
    write_csv_dataset(toy_dataset, tmp_path / "o.csv")
    assert not load_csv_dataset(tmp_path / "o.csv", drop_oracle=True).has_oracle


@pytest.mark.parametrize("body,match", [
    ("x_0,a,y\n1.0,2,3.0\n", "row 1: action"),
    ("x_0,a,y\n1.0,1,3.0\n1.0,0,abc\n", "row 2: unparseable"),
    ("x_0,a,y\n1.0,1,3.0\n1.0,0\n", "row 2 has 2 fields"),
    ("x_0,a,y\n1.0,0,nan\n", "row 1: non-finite"),
    ("x_0,y\n1.0,3.0\n", "missing column 'a'"),
    ("x_0,x_2,a,y\n1,1,0,1\n", "not contiguous"),
    ("a,y\n0,1\n", "x_0"),
    ("x_0,a,y\n", "no data rows"),
    ("", "empty file"),
])
def test_csv_schema_errors(tmp_path, body, match):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(SchemaError, match=match):
        load_csv_dataset(p)


def test_dataset_validation():
    with pytest.raises(SchemaError):
        Dataset(np.ones((3, 2)), [0, 1], np.ones(3))
    with pytest.raises(SchemaError):
        Dataset(np.ones((2, 2)), [0, 2], np.ones(2))
    with pytest.raises(SchemaError):
        Dataset(np.ones((2, 2)), [0, 1], np.ones(2), tau=np.ones(3))


def test_arm_and_subset(toy_dataset):
    assert toy_dataset.arm(1).n == 3 and set(toy_dataset.arm(0).a) == {0}
    sub = toy_dataset.subset([0, 2])
    assert np.array_equal(sub.x, toy_dataset.x[[0, 2]]) and sub.tau.shape == (2,)


@given(n=st.integers(2, 2000), ratio=st.floats(0.05, 0.95), seed=st.integers(0, 1000))
def test_split_is_a_partition(n, ratio, seed):
    n_val = int(np.floor(ratio * n + 0.5))
    if n_val < 1 or n_val >= n:
        with pytest.raises(ValueError):
            split_indices(n, SplitSpec(ratio, seed))
        return
    tr, va = split_indices(n, SplitSpec(ratio, seed))
    assert len(va) == n_val
    assert np.array_equal(np.sort(np.concatenate([tr, va])), np.arange(n))
    tr2, va2 = split_indices(n, SplitSpec(ratio, seed))
    assert np.array_equal(tr, tr2) and np.array_equal(va, va2)


def test_split_sizes_default():
    tr, va = split_train_val(Dataset(np.zeros((10, 1)), [0, 1] * 5, np.zeros(10)))
    assert (tr.n, va.n) == (7, 3)


def test_results_roundtrip_and_append(tmp_path):
    rows = [ResultRow("drnet", "synthetic-AN", 100, s, "pehe_rmse", 0.1 * s + 1 / 3,
                      ResultRow.encode_params({"b": 1, "a": 2})) for s in range(3)]
    p = tmp_path / "r.csv"
    write_results(rows[:2], p)
    write_results(rows[2:], p, append=True)
    back = read_results(p)
    assert back == rows
    assert p.read_text().count("method,dataset") == 1
    assert rows[0].params == '{"a":2,"b":1}'


def test_results_reject_bad_input(tmp_path):
    with pytest.raises(ValueError):
        write_results([], tmp_path / "r.csv")
    with pytest.raises(ValueError):
        ResultRow("m", "d", 1, 0, "pehe", float("nan"))
    (tmp_path / "bad.csv").write_text("foo,bar\n")
    with pytest.raises(SchemaError):
        read_results(tmp_path / "bad.csv")
