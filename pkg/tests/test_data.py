import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boostcp.data import (DataError, Dataset, kfold, load_csv, save_csv, split, standardize_response,
                          synth_heteroskedastic, synth_scale)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_csv_counts(tmp_path):
    p = _write(tmp_path, "a,b,c,y\n1,2,3,4\n5,6,7,8\n9,10,11,12\n")
    ds = load_csv(p, "y")
    assert (ds.n, ds.p) == (3, 3)
    assert ds.column_names == ("a", "b", "c")
    np.testing.assert_array_equal(ds.response, [4, 8, 12])


def test_load_csv_named_response_in_middle(tmp_path):
    p = _write(tmp_path, "a,y,b\n1,2,3\n4,5,6\n")
    ds = load_csv(p, "y")
    np.testing.assert_array_equal(ds.features, [[1, 3], [4, 6]])
    np.testing.assert_array_equal(ds.response, [2, 5])


def test_load_csv_no_rows(tmp_path):
    with pytest.raises(DataError, match="no rows"):
        load_csv(_write(tmp_path, "a,y\n"))


def test_load_csv_nan_cell_is_named(tmp_path):
    with pytest.raises(DataError) as err:
        load_csv(_write(tmp_path, "a,b,y\n1,2,3\n4,NaN,6\n"))
    msg = str(err.value)
    assert "row 2" in msg and "'b'" in msg


@pytest.mark.parametrize("text, pattern", [
    ("a,b,y\n1,x,3\n", "b"),
    ("a,b,y\n1,2\n", "row"),
    ("a,a,y\n1,2,3\n", "duplicate"),
])
def test_load_csv_malformed(tmp_path, text, pattern):
    with pytest.raises(DataError, match=pattern):
        load_csv(_write(tmp_path, text))


def test_load_csv_missing_response_and_file(tmp_path):
    with pytest.raises(DataError):
        load_csv(_write(tmp_path, "a,b\n1,2\n"), "y")
    with pytest.raises(DataError):
        load_csv(tmp_path / "absent.csv")


def test_csv_round_trip_is_bit_exact(tmp_path):
    ds = synth_heteroskedastic(50, 3, 7)
    save_csv(ds, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.response, ds.response)
    assert back.column_names == ds.column_names


def _ds(y):
    y = np.asarray(y, dtype=float)
    return Dataset(np.arange(y.size, dtype=float)[:, None], y, ("x",))


def test_standardize_examples():
    out, scale = standardize_response(_ds([2.0, -4.0]), [0, 1])
    assert scale == 3.0
    np.testing.assert_allclose(out.response, [2 / 3, -4 / 3])
    assert out.metadata["response_scaling"] == "mean_abs_train"

    out, scale = standardize_response(_ds([1.0, 1.0, 5.0]), [0, 1])
    assert scale == 1.0
    np.testing.assert_array_equal(out.response, [1.0, 1.0, 5.0])

    with pytest.raises(DataError):
        standardize_response(_ds([0.0, 0.0, 3.0]), [0, 1])


@given(st.lists(st.floats(-1e6, 1e6).filter(lambda v: v == 0 or abs(v) > 1e-200), min_size=2, max_size=30))
def test_standardize_is_invertible(values):
    y = np.array(values)
    if np.mean(np.abs(y)) == 0:
        return
    out, scale = standardize_response(_ds(y), np.arange(y.size))
    np.testing.assert_allclose(out.response * scale, y, rtol=1e-12, atol=0)


def test_split_examples():
    s = split(10, 0.6, 3)
    assert (s.train.size, s.calib.size) == (6, 4)
    assert not set(s.train) & set(s.calib)
    assert sorted(np.concatenate([s.train, s.calib])) == list(range(10))
    t = split(10, 0.6, 3)
    np.testing.assert_array_equal(s.train, t.train)
    u = split(2, 0.5, 0)
    assert (u.train.size, u.calib.size) == (1, 1)
    with pytest.raises(DataError):
        split(3, 0.1, 0)


def test_kfold_examples():
    f = kfold(np.arange(6), 3, 0)
    assert sorted(np.bincount(f.fold_of)) == [2, 2, 2]
    f = kfold(np.arange(7), 3, 0)
    assert sorted(np.bincount(f.fold_of), reverse=True) == [3, 2, 2]
    with pytest.raises(DataError):
        kfold(np.arange(7), 1, 0)
    with pytest.raises(DataError):
        kfold(np.arange(2), 3, 0)


@settings(max_examples=50)
@given(st.integers(4, 200), st.floats(0.2, 0.8), st.integers(2, 4), st.integers(0, 2**32))
def test_split_then_kfold_covers_training_once(n, gamma, k, seed):
    s = split(n, gamma, seed)
    if s.train.size < k:
        return
    folds = kfold(s.train, k, seed).folds(s.train)
    merged = np.concatenate(folds)
    assert sorted(merged) == sorted(s.train)


def test_synth_properties():
    a = synth_heteroskedastic(1000, 5, 11)
    b = synth_heteroskedastic(1000, 5, 11)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.response, b.response)
    assert synth_heteroskedastic(10, 1, 0).p == 1

    # m(0) = 0: responses with small x1 average near zero
    near = a.features[:, 0] < 0.05
    bound = 4 * float(synth_scale(0.05)) / np.sqrt(near.sum())
    assert abs(a.response[near].mean() - 0.05) < bound + 0.1
