import numpy as np
import pytest

from helpers import TOY_X, TOY_Y, node_membership, random_instance, toy_forest
from mdiplus.data import Dataset, SeededRng
from mdiplus.forest import ForestParams, Tree, fit_forest
from mdiplus.stumps import augment, expand_rows, partial_design, stump_columns, stump_value, transform


def _tree(n_left, n_right):
    # root split on feature 0 at 0.5 with the given in-bag child counts
    return Tree([0, -1, -1], [0.5, 0, 0], [1, -1, -1], [2, -1, -1],
                [n_left + n_right, n_left, n_right], [0, 0, 0], [0], 1)


@pytest.mark.parametrize("nl,nr,left,right", [(2, 2, 1.0, -1.0), (2, 1, 1 / np.sqrt(2), -np.sqrt(2))])
def test_stump_value_root(nl, nr, left, right):
    t = _tree(nl, nr)
    col = stump_columns(t)[0]
    assert stump_value([0.0], col, t) == pytest.approx(left, abs=1e-12)
    assert stump_value([1.0], col, t) == pytest.approx(right, abs=1e-12)
    assert col.scale_left > 0 > col.scale_right
    assert col.scale_left * nl + col.scale_right * nr == pytest.approx(0.0, abs=1e-12)


def test_stump_value_outside_node_is_zero():
    # root on x0 at 0; left child splits x0 at -1
    t = Tree([0, 0, -1, -1, -1], [0.0, -1.0, 0, 0, 0], [1, 3, -1, -1, -1], [2, 4, -1, -1, -1],
             [4, 2, 2, 1, 1], [0] * 5, [0, 1], 1)
    col = next(c for c in stump_columns(t) if c.split_ref == 1)
    assert stump_value([5.0], col, t) == 0.0
    assert stump_value([-5.0], col, t) == 1.0


def test_transform_toy_column():
    tm = transform(TOY_X, toy_forest().trees[0])
    np.testing.assert_allclose(tm.values[:, 0], [1, 1, -1, -1])


def test_transform_zero_split_tree_has_no_columns():
    d = Dataset(TOY_X, TOY_Y)
    f = fit_forest(d, ForestParams(n_trees=1, min_samples_leaf=4, bootstrap=False), SeededRng(0))
    tm = transform(TOY_X, f.trees[0])
    assert tm.n_columns == 0
    assert augment(tm, TOY_X).n_columns == 0


def test_transform_matches_brute_force_membership():
    for seed in range(25):
        inst = random_instance(seed)
        tm = transform(inst.X, inst.tree)
        member = node_membership(inst.tree, inst.X)
        cols = stump_columns(inst.tree)
        for j, c in enumerate(cols):
            nl = inst.tree.n_node[inst.tree.left[c.split_ref]]
            nr = inst.tree.n_node[inst.tree.right[c.split_ref]]
            in_l = member[:, inst.tree.left[c.split_ref]]
            in_r = member[:, inst.tree.right[c.split_ref]]
            expect = (nr * in_l - nl * in_r) / np.sqrt(nl * nr)
            np.testing.assert_allclose(tm.values[:, j], expect, rtol=1e-12, atol=1e-12)
            for i in range(0, inst.X.shape[0], 7):
                assert stump_value(inst.X[i], c, inst.tree) == pytest.approx(expect[i], abs=1e-12)


def test_in_bag_zero_mean_and_orthogonality():
    for seed in range(25):
        inst = random_instance(seed)
        tm = transform(inst.X[inst.in_bag], inst.tree)
        if not tm.n_columns:
            continue
        np.testing.assert_allclose(tm.values.sum(axis=0), 0.0, atol=1e-10)
        G = tm.values.T @ tm.values
        N = inst.tree.n_node[tm.column_node]
        np.testing.assert_allclose(np.diag(G), N, rtol=1e-8)
        off = G - np.diag(np.diag(G))
        assert np.abs(off).max() <= 1e-8 * N.max()


def test_blocks_partition_columns():
    inst = random_instance(5)
    tm = transform(inst.X, inst.tree, augment_raw=True)
    covered = sorted(j for r in tm.blocks.values() for j in r)
    assert covered == list(range(tm.n_columns))
    for k, r in tm.blocks.items():
        assert np.all(tm.column_feature[list(r)] == k)


def test_augment_adds_raw_column_only_to_split_features():
    X = np.column_stack([TOY_X[:, 0], [5.0, 3.0, 1.0, 2.0]])
    d = Dataset(X, TOY_Y)
    t = fit_forest(d, ForestParams(n_trees=1, min_samples_leaf=2, max_features="all", bootstrap=False),
                   SeededRng(0)).trees[0]
    tm = transform(X, t)
    assert len(tm.block(0)) == 1 and len(tm.block(1)) == 0
    aug = augment(tm, X)
    assert len(aug.block(0)) == 2 and len(aug.block(1)) == 0
    np.testing.assert_array_equal(aug.values[:, aug.raw_columns[0]], X[:, 0])
    assert aug.raw_columns[1] is None
    np.testing.assert_array_equal(transform(X, t, augment_raw=True).values, aug.values)


def test_augmented_block_sizes():
    inst = random_instance(8)
    tm = transform(inst.X, inst.tree, augment_raw=True)
    counts = inst.tree.split_counts()
    for k in range(inst.X.shape[1]):
        assert len(tm.block(k)) == (counts[k] + 1 if counts[k] else 0)


def test_partial_design_in_bag_out_of_block_is_zero():
    inst = random_instance(21)
    tm = transform(inst.X[inst.in_bag], inst.tree)
    for k in range(inst.X.shape[1]):
        P = partial_design(tm, k)
        others = [j for j in range(tm.n_columns) if j not in tm.block(k)]
        np.testing.assert_allclose(P[:, others], 0.0, atol=1e-10)
        np.testing.assert_array_equal(P[:, list(tm.block(k))], tm.values[:, list(tm.block(k))])


def test_partial_design_empty_block_is_all_means():
    X = np.column_stack([TOY_X[:, 0], [5.0, 3.0, 1.0, 2.0]])
    t = fit_forest(Dataset(X, TOY_Y), ForestParams(n_trees=1, min_samples_leaf=2, max_features="all",
                                                   bootstrap=False), SeededRng(0)).trees[0]
    tm = transform(X, t, augment_raw=True)
    P = partial_design(tm, 1)
    np.testing.assert_allclose(P, np.broadcast_to(tm.values.mean(axis=0), P.shape))


def test_partial_design_single_block_is_identity():
    tm = transform(TOY_X, toy_forest().trees[0])
    np.testing.assert_array_equal(partial_design(tm, 0), tm.values)


def test_expand_rows_repeats_multiplicity():
    inst = random_instance(2)
    tm = transform(inst.X, inst.tree)
    ex = expand_rows(tm, inst.in_bag)
    np.testing.assert_array_equal(ex.values, transform(inst.X[inst.in_bag], inst.tree).values)


def test_stump_scales_use_in_bag_counts_on_full_data():
    inst = random_instance(13)
    tm = transform(inst.X, inst.tree)
    for j, c in enumerate(stump_columns(inst.tree)):
        vals = np.unique(tm.values[:, j])
        assert set(np.round(vals, 12)) <= {0.0, round(c.scale_left, 12), round(c.scale_right, 12)}
