import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import TOY_X, TOY_Y, node_membership, random_instance, toy_data, toy_forest
from mdiplus.data import Dataset, SeededRng, bootstrap_sample
from mdiplus.exceptions import ConfigError, DataError
from mdiplus.forest import (
    Forest, ForestParams, Tree, best_split, fit_forest, grow_tree, impurity_decrease,
)
from mdiplus.importance import tree_mdi


def test_impurity_decrease_pure_children():
    assert impurity_decrease([0, 0], [1, 1]) == pytest.approx(0.25, abs=1e-15)


def test_impurity_decrease_uneven_split():
    assert impurity_decrease([0, 1], [5]) == pytest.approx(4.5, abs=1e-12)
    assert (2 * 1 / 9) * 4.5**2 == pytest.approx(4.5)


def test_impurity_decrease_equal_means_is_zero():
    assert impurity_decrease([0, 2], [1, 1]) == pytest.approx(0.0, abs=1e-15)


def test_best_split_toy(backend):
    s = best_split(TOY_X, TOY_Y, np.arange(4), [0])
    assert (s.feature_index, s.threshold) == (0, 1.5)
    assert s.impurity_decrease == pytest.approx(0.25)


def test_best_split_constant_response_or_feature(backend):
    assert best_split(TOY_X, np.ones(4), np.arange(4), [0]) is None
    assert best_split(np.ones((4, 2)), TOY_Y, np.arange(4), [0, 1]) is None


def test_best_split_tie_goes_to_lowest_feature_then_threshold(backend):
    X = np.column_stack([TOY_X[:, 0], TOY_X[:, 0]])
    s = best_split(X, TOY_Y, np.arange(4), [1, 0])
    assert s.feature_index == 0
    # y symmetric in x: thresholds 0.5 and 2.5 tie at 1/12
    s = best_split(TOY_X, np.array([1.0, 0.0, 0.0, 1.0]), np.arange(4), [0])
    assert s.threshold == 0.5
    assert s.impurity_decrease == pytest.approx(1 / 12)


def _brute_best(X, y, w, rows, feats, min_leaf):
    best = (0.0, None, None)
    for f in sorted(feats):
        vals = np.unique(X[rows, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = a + (b - a) / 2
            left = rows[X[rows, f] <= thr]
            right = rows[X[rows, f] > thr]
            if w[left].sum() < min_leaf or w[right].sum() < min_leaf:
                continue
            d = impurity_decrease(y[left], y[right], w[left], w[right])
            if d > best[0] + 1e-12:
                best = (d, f, thr)
    return best


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 32), st.integers(1, 4), st.integers(0, 2**31), st.sampled_from([1, 2, 3]))
def test_best_split_matches_exhaustive_scan(n, p, seed, min_leaf):
    gen = np.random.default_rng(seed)
    X = gen.integers(0, 5, size=(n, p)).astype(float)
    y = gen.standard_normal(n)
    w = gen.integers(1, 3, size=n).astype(float)
    rows = np.arange(n)
    s = best_split(X, y, rows, range(p), weights=w, min_samples_leaf=min_leaf)
    d, f, thr = _brute_best(X, y, w, rows, range(p), min_leaf)
    if f is None:
        assert s is None
    else:
        assert s is not None
        assert s.impurity_decrease == pytest.approx(d, rel=1e-9)
        # the scan may legitimately pick an equal-gain split within rounding
        assert (s.feature_index, s.threshold) == (f, thr) or abs(s.impurity_decrease - d) < 1e-9 * max(d, 1)


def test_best_split_is_deterministic(backend):
    gen = np.random.default_rng(0)
    X = gen.standard_normal((30, 3))
    y = gen.standard_normal(30)
    a = best_split(X, y, np.arange(30), [0, 1, 2])
    b = best_split(X, y, np.arange(30), [0, 1, 2])
    assert a == b


def test_grow_tree_toy(backend):
    t = toy_forest().trees[0]
    assert t.n_splits == 1
    leaves = np.flatnonzero(t.feature < 0)
    assert sorted(t.value[leaves].tolist()) == [0.0, 1.0]
    assert t.threshold[0] == 1.5


def test_grow_tree_min_leaf_equals_n_gives_stump_free_tree(backend):
    t = grow_tree(TOY_X, TOY_Y, np.ones(4), ForestParams(min_samples_leaf=4, max_features="all"), None)
    assert t.n_splits == 0
    assert t.value[0] == 0.5


def test_grow_tree_max_depth_one(backend):
    gen = np.random.default_rng(1)
    X = gen.standard_normal((40, 3))
    y = X @ [1.0, 2.0, 3.0]
    t = grow_tree(X, y, np.ones(40), ForestParams(min_samples_leaf=1, max_depth=1, max_features="all"), None)
    assert t.n_splits <= 1


def test_every_split_has_positive_gain_and_valid_children():
    for seed in range(30):
        inst = random_instance(seed)
        t = inst.tree
        assert np.all(t.impurity_decreases() > 0)
        for s in t.splits:
            assert s.n_left >= 1 and s.n_right >= 1
            assert s.n_left + s.n_right == s.n_node


def test_by_feature_partitions_splits():
    t = random_instance(3).tree
    blocks = t.by_feature
    flat = sorted(itertools.chain.from_iterable(blocks.values()))
    assert flat == list(range(t.n_splits))


def test_in_bag_rows_reach_exactly_one_leaf():
    inst = random_instance(11)
    member = node_membership(inst.tree, inst.X)
    leaves = inst.tree.feature < 0
    assert np.all(member[:, leaves].sum(axis=1) == 1)
    np.testing.assert_array_equal(np.flatnonzero(leaves)[member[:, leaves].argmax(axis=1)],
                                  inst.tree.apply(inst.X))


def test_sum_identity_total_impurity_reduction():
    for seed in range(20):
        inst = random_instance(seed)
        t = inst.tree
        yb = inst.y[inst.in_bag]
        leaf = t.apply(inst.X[inst.in_bag])
        within = sum(((yb[leaf == l] - yb[leaf == l].mean()) ** 2).sum() for l in np.unique(leaf))
        assert tree_mdi(t).sum() == pytest.approx(yb.var() - within / yb.size, rel=1e-9, abs=1e-12)


def test_fit_forest_single_tree_matches_grow_tree(backend):
    d = Dataset(np.random.default_rng(2).standard_normal((30, 3)), np.arange(30.0))
    params = ForestParams(n_trees=1, min_samples_leaf=2)
    f = fit_forest(d, params, SeededRng(5))
    stream = SeededRng(5).child(0)
    boot = bootstrap_sample(30, stream.child(0))
    t = grow_tree(d.X, d.y, boot.counts, params, stream.child(1))
    assert f.trees[0].to_dict() == t.to_dict()
    assert f.bootstraps[0] == boot


def test_fit_forest_is_bit_identical_across_runs_and_threads(backend):
    d = Dataset(np.random.default_rng(3).standard_normal((60, 4)), np.random.default_rng(4).standard_normal(60))
    a = fit_forest(d, ForestParams(n_trees=8), SeededRng(1)).dumps()
    b = fit_forest(d, ForestParams(n_trees=8), SeededRng(1)).dumps()
    c = fit_forest(d, ForestParams(n_trees=8), SeededRng(1), threads=4).dumps()
    assert a == b == c


def test_backends_grow_identical_forests(monkeypatch):
    pytest.importorskip("mdiplus._ckernels")
    from mdiplus import _ckernels, _pykernels, forest as fmod
    d = Dataset(np.random.default_rng(5).standard_normal((80, 5)), np.random.default_rng(6).standard_normal(80))
    out = []
    for impl in (_ckernels, _pykernels):
        monkeypatch.setattr(fmod, "kernels", impl)
        out.append(fit_forest(d, ForestParams(n_trees=5, min_samples_leaf=1), SeededRng(2)).dumps())
    assert out[0] == out[1]


def test_toy_forest_roots_split_feature_zero(backend):
    f = toy_forest(n_trees=100, bootstrap=True)
    for t in f.trees:
        assert t.n_splits == 0 or t.feature[0] == 0


def test_predict_pure_leaf_and_threshold_routing(backend):
    f = toy_forest()
    assert f.predict([[3.0]])[0] == 1.0
    # x equal to the threshold goes left
    assert f.predict([[1.5]])[0] == 0.0
    assert f.predict([[1.5000001]])[0] == 1.0


def test_forest_of_identical_trees_predicts_like_one():
    one = toy_forest()
    many = one.subset([0, 0, 0])
    q = np.linspace(-1, 4, 11)[:, None]
    np.testing.assert_array_equal(many.predict(q), one.trees[0].predict(q))


def test_serialization_round_trip(tmp_path):
    d = Dataset(np.random.default_rng(7).standard_normal((40, 3)), np.arange(40.0))
    f = fit_forest(d, ForestParams(n_trees=3), SeededRng(0))
    f.save(tmp_path / "m.json")
    g = Forest.load(tmp_path / "m.json")
    assert g.dumps() == f.dumps()
    np.testing.assert_array_equal(g.predict(d.X), f.predict(d.X))
    assert json.loads(f.dumps())["schema_version"] == 1


def test_max_features_rules():
    assert ForestParams(max_features="third").resolve_max_features(10) == 4
    assert ForestParams(max_features="sqrt").resolve_max_features(10) == 4
    assert ForestParams(max_features="auto").resolve_max_features(9, "binary-classification") == 3
    with pytest.raises(ConfigError):
        ForestParams(max_features=5).validate(3)
    with pytest.raises(ConfigError):
        ForestParams(min_samples_leaf=0).validate(3)


def test_predict_rejects_wrong_width():
    with pytest.raises(DataError):
        toy_forest().predict(np.zeros((2, 3)))


def test_classification_forest_probabilities():
    gen = np.random.default_rng(8)
    X = gen.standard_normal((100, 3))
    y = (X[:, 0] > 0).astype(float)
    f = fit_forest(Dataset(X, y, "binary-classification"), ForestParams.for_task("binary", n_trees=10),
                   SeededRng(0))
    p = f.predict(X)
    assert np.all((p >= 0) & (p <= 1))
    assert np.mean((p > 0.5) == y) > 0.9


def test_tree_from_dict_round_trip():
    t = random_instance(4).tree
    u = Tree.from_dict(json.loads(json.dumps(t.to_dict())), t.n_features)
    assert u.to_dict() == t.to_dict()
