import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdiplus.data import (
    BootstrapIndex, Dataset, SeededRng, bootstrap_sample, load_csv, split_sizes, train_test_split, write_csv,
)
from mdiplus.exceptions import DataError


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_four_rows(tmp_path):
    f = _write(tmp_path / "d.csv", "x1,y\n0,0\n1,0\n2,1\n3,1\n")
    d = load_csv(f, "y")
    assert (d.n, d.p) == (4, 1)
    assert d.column_names == ("x1",)
    np.testing.assert_array_equal(d.y, [0, 0, 1, 1])


def test_load_csv_bad_cell_names_cell(tmp_path):
    f = _write(tmp_path / "d.csv", "x1,y\n0,0\nabc,1\n")
    with pytest.raises(DataError, match="abc"):
        load_csv(f, "y")


def test_load_csv_binary_domain_error_names_row(tmp_path):
    f = _write(tmp_path / "d.csv", "x1,y\n0,0\n1,1\n2,2\n3,1\n")
    with pytest.raises(DataError, match="row 3"):
        load_csv(f, "y", "binary-classification")


def test_load_csv_missing_value_is_error(tmp_path):
    f = _write(tmp_path / "d.csv", "x1,y\n0,0\n,1\n2,1\n")
    with pytest.raises(DataError):
        load_csv(f, "y")


def test_load_csv_missing_response_column(tmp_path):
    f = _write(tmp_path / "d.csv", "x1,x2\n0,0\n1,1\n")
    with pytest.raises(DataError, match="y"):
        load_csv(f, "y")


def test_dataset_rejects_non_finite():
    with pytest.raises(DataError):
        Dataset(np.array([[0.0], [np.nan]]), [0, 1])
    with pytest.raises(DataError):
        Dataset(np.array([[0.0]]), [0])


def test_dataset_is_read_only():
    d = Dataset(np.zeros((3, 2)), [1, 2, 3])
    with pytest.raises(ValueError):
        d.X[0, 0] = 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(1, 5), st.integers(0, 2**31))
def test_csv_round_trip_is_bit_identical(tmp_path_factory, n, p, seed):
    gen = np.random.default_rng(seed)
    X = gen.standard_normal((n, p)) * 10.0 ** gen.integers(-300, 300, size=(n, p))
    y = gen.standard_normal(n) / 3.0
    d = Dataset(X, y)
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(d, path)
    back = load_csv(path, "y")
    assert back.X.tobytes() == d.X.tobytes()
    assert back.y.tobytes() == d.y.tobytes()


def test_bootstrap_single_row():
    b = bootstrap_sample(1, SeededRng(3))
    np.testing.assert_array_equal(b.in_bag, [0])
    assert b.oob.size == 0


def test_bootstrap_oob_fraction_matches_expectation():
    n = 1000
    # a row is out of bag with probability (1 - 1/n)^n
    expected = (1 - 1 / n) ** n
    assert abs(expected - 0.3679) < 1e-3
    fracs = np.array([bootstrap_sample(n, SeededRng(s)).oob.size / n for s in range(100)])
    assert np.all(np.abs(fracs - expected) <= 0.05)
    assert abs(fracs.mean() - expected) <= 0.005


def test_bootstrap_determinism():
    a = bootstrap_sample(50, SeededRng(9, 4))
    b = bootstrap_sample(50, SeededRng(9, 4))
    assert a == b
    assert not a == bootstrap_sample(50, SeededRng(9, 5))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), st.integers(0, 2**40))
def test_bootstrap_invariants(n, seed):
    b = bootstrap_sample(n, SeededRng(seed))
    assert b.counts.sum() == n
    assert b.in_bag.size == n
    assert np.intersect1d(b.oob, b.support).size == 0
    assert np.union1d(b.oob, b.support).size == n


def test_child_streams_are_independent_of_order():
    root = SeededRng(1)
    x = root.child(3).generator().random(4)
    root.child(0).generator().random(100)
    np.testing.assert_array_equal(x, root.child(3).generator().random(4))
    assert not np.array_equal(x, root.child(4).generator().random(4))


@pytest.mark.parametrize("n,frac,sizes", [(10, 0.2, (8, 2)), (5, 0.2, (4, 1)), (2, 0.99, (1, 1))])
def test_split_sizes(n, frac, sizes):
    assert split_sizes(n, frac) == sizes


def test_train_test_split_partitions_rows():
    d = Dataset(np.arange(20.0).reshape(10, 2), np.arange(10.0))
    tr, te = train_test_split(d, 0.3, SeededRng(0))
    assert (tr.n, te.n) == (7, 3)
    assert sorted(np.concatenate([tr.y, te.y]).tolist()) == list(range(10))


def test_from_in_bag_counts_multiplicity():
    b = BootstrapIndex.from_in_bag([0, 0, 2], 4)
    np.testing.assert_array_equal(b.counts, [2, 0, 1, 0])
    np.testing.assert_array_equal(b.oob, [1, 3])
