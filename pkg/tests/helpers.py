"""Instance generators and brute-force oracles shared by the test modules."""
from dataclasses import dataclass

import numpy as np

from mdiplus.data import Dataset, SeededRng
from mdiplus.forest import Forest, ForestParams, Tree, fit_forest

TOY_X = np.array([[0.0], [1.0], [2.0], [3.0]])
TOY_Y = np.array([0.0, 0.0, 1.0, 1.0])


def toy_data() -> Dataset:
    return Dataset(TOY_X, TOY_Y)


def toy_forest(n_trees=1, bootstrap=False) -> Forest:
    params = ForestParams(n_trees=n_trees, max_features="all", min_samples_leaf=1, bootstrap=bootstrap)
    return fit_forest(toy_data(), params, SeededRng(7))


@dataclass
class Instance:
    X: np.ndarray
    y: np.ndarray
    forest: Forest

    @property
    def tree(self) -> Tree:
        return self.forest.trees[0]

    @property
    def in_bag(self) -> np.ndarray:
        return self.forest.bootstraps[0].in_bag

    @property
    def data(self) -> Dataset:
        return Dataset(self.X, self.y)


def random_instance(seed: int) -> Instance:
    """One bootstrapped variance-split tree: n in [8, 64], p in [2, 6], depth <= 4, leaf size 1 or 5."""
    gen = np.random.default_rng(seed)
    n = int(gen.integers(8, 65))
    p = int(gen.integers(2, 7))
    if gen.random() < 0.3:
        X = gen.integers(0, 4, size=(n, p)).astype(float)
    else:
        X = gen.standard_normal((n, p))
    y = X[:, 0] - 0.5 * X[:, 1] + (X[:, -1] > 0) + gen.standard_normal(n) * gen.uniform(0.1, 2.0)
    params = ForestParams(n_trees=1, max_features=int(gen.integers(1, p + 1)),
                          min_samples_leaf=int(gen.choice([1, 5])), max_depth=int(gen.integers(1, 5)),
                          impurity="variance")
    forest = fit_forest(Dataset(X, y), params, SeededRng(seed))
    return Instance(X, y, forest)


def instance_suite(count=200, base_seed=1000):
    return [random_instance(base_seed + i) for i in range(count)]


def node_membership(tree: Tree, X) -> np.ndarray:
    """(rows x nodes) boolean: does row i pass through node t. Plain recursive walk."""
    X = np.asarray(X, dtype=float)
    out = np.zeros((X.shape[0], tree.n_nodes), dtype=bool)
    for i, x in enumerate(X):
        node = 0
        out[i, node] = True
        while tree.feature[node] >= 0:
            node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
            out[i, node] = True
    return out


def with_values(tree: Tree, values) -> Tree:
    """Same structure and counts, different node means."""
    return Tree(tree.feature, tree.threshold, tree.left, tree.right, tree.n_node, values,
                tree.split_order, tree.n_features)
