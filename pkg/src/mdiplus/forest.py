"""CART trees and random forests grown with the variance split criterion.

Splits are chosen by the impurity decrease

    delta(s) = N(t)^-1 * (SS(t) - SS(t_L) - SS(t_R))
             = N(t_L) N(t_R) / N(t)^2 * (mean_L - mean_R)^2,

evaluated on the bootstrap sample with multiplicity. For 0/1 responses the
Gini decrease is exactly twice this quantity, so classification trees use the
same search; only the label of the criterion changes.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from mdiplus._backend import kernels
from mdiplus.data import BootstrapIndex, Dataset, SeededRng, bootstrap_sample, normalize_task
from mdiplus.exceptions import ConfigError, DataError

SCHEMA_VERSION = 1
ZERO_GAIN_TOL = 1e-12


@dataclass(frozen=True)
class Split:
    node_id: int
    feature_index: int
    threshold: float
    n_node: float
    n_left: float
    n_right: float
    mean_node: float
    mean_left: float
    mean_right: float

    @property
    def impurity_decrease(self) -> float:
        d = self.mean_left - self.mean_right
        return self.n_left * self.n_right / self.n_node**2 * d * d


def impurity_decrease(y_left, y_right, w_left=None, w_right=None) -> float:
    """Impurity decrease of a split, straight from the sum-of-squares form.

    Optional weights are bootstrap multiplicities.
    """
    y_left = np.asarray(y_left, dtype=float)
    y_right = np.asarray(y_right, dtype=float)
    w_left = np.ones_like(y_left) if w_left is None else np.asarray(w_left, dtype=float)
    w_right = np.ones_like(y_right) if w_right is None else np.asarray(w_right, dtype=float)
    if w_left.sum() <= 0 or w_right.sum() <= 0:
        raise ValueError("both children of a split must be non-empty")
    y = np.concatenate([y_left, y_right])
    w = np.concatenate([w_left, w_right])

    def ss(v, wt):
        m = np.dot(wt, v) / wt.sum()
        return np.dot(wt, (v - m) ** 2)

    return (ss(y, w) - ss(y_left, w_left) - ss(y_right, w_right)) / w.sum()


@dataclass(frozen=True)
class ForestParams:
    """Hyperparameters. ``max_features`` is a count or one of the rules
    ``"third"`` (ceil(p/3)), ``"sqrt"`` (ceil(sqrt p)), ``"all"``; ``"auto"``
    picks the task's default rule.
    """

    n_trees: int = 100
    max_features: int | str = "auto"
    min_samples_leaf: int = 5
    max_depth: int | None = None
    impurity: str = "auto"
    bootstrap: bool = True

    @classmethod
    def for_task(cls, task: str, **overrides) -> "ForestParams":
        task = normalize_task(task)
        if task == "regression":
            base = dict(max_features="third", min_samples_leaf=5, impurity="variance")
        else:
            base = dict(max_features="sqrt", min_samples_leaf=1, impurity="gini")
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def validate(self, p: int, task: str = "regression"):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0")
        if self.impurity not in ("auto", "variance", "gini"):
            raise ConfigError(f"unknown impurity {self.impurity!r}")
        mf = self.resolve_max_features(p, task)
        if not 1 <= mf <= p:
            raise ConfigError(f"max_features={mf} outside [1, {p}]")

    def resolve_max_features(self, p: int, task: str = "regression") -> int:
        rule = self.max_features
        if rule == "auto":
            rule = "third" if normalize_task(task) == "regression" else "sqrt"
        if rule == "third":
            return max(1, math.ceil(p / 3))
        if rule == "sqrt":
            return max(1, math.ceil(math.sqrt(p)))
        if rule == "all":
            return p
        if isinstance(rule, str):
            raise ConfigError(f"unknown max_features rule {rule!r}")
        return int(rule)

    def resolve_impurity(self, task: str) -> str:
        if self.impurity != "auto":
            return self.impurity
        return "variance" if normalize_task(task) == "regression" else "gini"


class Tree:
    """Array-backed binary tree.

    Node ids are assigned at creation; ``split_order`` lists the internal
    nodes in the order their splits were actualised. Leaves have
    ``feature == -1``.
    """

    def __init__(self, feature, threshold, left, right, n_node, value, split_order, n_features):
        self.feature = np.asarray(feature, dtype=np.intp)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.intp)
        self.right = np.asarray(right, dtype=np.intp)
        self.n_node = np.asarray(n_node, dtype=np.float64)
        self.value = np.asarray(value, dtype=np.float64)
        self.split_order = np.asarray(split_order, dtype=np.intp)
        self.n_features = int(n_features)
        for a in (self.feature, self.threshold, self.left, self.right, self.n_node, self.value, self.split_order):
            a.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def parent(self) -> np.ndarray:
        """Parent id of every node (-1 at the root)."""
        par = np.full(self.n_nodes, -1, dtype=np.intp)
        internal = self.feature >= 0
        ids = np.flatnonzero(internal)
        par[self.left[ids]] = ids
        par[self.right[ids]] = ids
        return par

    @property
    def n_splits(self) -> int:
        return self.split_order.shape[0]

    @property
    def splits(self) -> list[Split]:
        out = []
        for node in self.split_order:
            l, r = self.left[node], self.right[node]
            out.append(Split(
                int(node), int(self.feature[node]), float(self.threshold[node]),
                float(self.n_node[node]), float(self.n_node[l]), float(self.n_node[r]),
                float(self.value[node]), float(self.value[l]), float(self.value[r]),
            ))
        return out

    @property
    def by_feature(self) -> dict[int, list[int]]:
        """Feature index -> positions in ``splits`` of the splits on it."""
        groups = {k: [] for k in range(self.n_features)}
        for j, node in enumerate(self.split_order):
            groups[int(self.feature[node])].append(j)
        return groups

    def split_counts(self) -> np.ndarray:
        return np.bincount(self.feature[self.split_order], minlength=self.n_features)

    def impurity_decreases(self) -> np.ndarray:
        """Impurity decrease of each split, in ``split_order``."""
        s = self.split_order
        l, r = self.left[s], self.right[s]
        d = self.value[l] - self.value[r]
        return self.n_node[l] * self.n_node[r] / self.n_node[s] ** 2 * d * d

    def _check(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"query matrix must have {self.n_features} columns, got shape {X.shape}")
        return X

    def apply(self, X) -> np.ndarray:
        X = self._check(X)
        return kernels.apply(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            f = int(self.feature[i])
            node = {"id": i, "feature": f, "n_node": _num(self.n_node[i]), "leaf_value": float(self.value[i])}
            if f >= 0:
                l, r = int(self.left[i]), int(self.right[i])
                node.update(
                    threshold=float(self.threshold[i]), left=l, right=r,
                    n_left=_num(self.n_node[l]), n_right=_num(self.n_node[r]),
                    means=[float(self.value[i]), float(self.value[l]), float(self.value[r])],
                )
            else:
                node.update(threshold=None, left=-1, right=-1, n_left=0, n_right=0,
                            means=[float(self.value[i])])
            nodes.append(node)
        return {"nodes": nodes, "split_order": [int(s) for s in self.split_order]}

    @classmethod
    def from_dict(cls, d: dict, n_features: int) -> "Tree":
        nodes = sorted(d["nodes"], key=lambda nd: nd["id"])
        return cls(
            [nd["feature"] for nd in nodes],
            [0.0 if nd["threshold"] is None else nd["threshold"] for nd in nodes],
            [nd["left"] for nd in nodes],
            [nd["right"] for nd in nodes],
            [nd["n_node"] for nd in nodes],
            [nd["leaf_value"] for nd in nodes],
            d["split_order"], n_features,
        )


def _num(v):
    v = float(v)
    return int(v) if v.is_integer() else v


def best_split(X, y, rows, candidate_features, weights=None, min_samples_leaf=1, tol=ZERO_GAIN_TOL):
    """Exhaustive search over midpoints of consecutive distinct values.

    Returns a :class:`Split` or ``None``. Ties go to the lowest feature index,
    then the lowest threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ones(len(y)) if weights is None else np.ascontiguousarray(weights, dtype=np.float64)
    rows = np.ascontiguousarray(rows, dtype=np.intp)
    feats = np.ascontiguousarray(np.sort(np.asarray(candidate_features, dtype=np.intp)))
    Xt = np.ascontiguousarray(X.T)
    f, thr, _ = kernels.best_split(Xt, y, w, rows, feats, float(min_samples_leaf), float(tol))
    if f < 0:
        return None
    wn, yn = w[rows], y[rows]
    go_left = X[rows, f] <= thr
    nl, nr = wn[go_left].sum(), wn[~go_left].sum()
    return Split(
        -1, int(f), float(thr), float(wn.sum()), float(nl), float(nr),
        float(np.dot(wn, yn) / wn.sum()),
        float(np.dot(wn[go_left], yn[go_left]) / nl),
        float(np.dot(wn[~go_left], yn[~go_left]) / nr),
    )


def grow_tree(X, y, counts, params: ForestParams, rng: SeededRng | None, task: str = "regression") -> Tree:
    """Grow one CART tree on the rows with positive ``counts`` (multiplicities)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(counts, dtype=np.float64)
    n, p = X.shape
    mf = params.resolve_max_features(p, task)
    min_leaf = float(params.min_samples_leaf)
    max_depth = params.max_depth if params.max_depth is not None else np.iinfo(np.int64).max
    gen = rng.generator() if rng is not None else np.random.default_rng(0)
    Xt = np.ascontiguousarray(X.T)

    root_rows = np.flatnonzero(w > 0)
    if root_rows.size == 0:
        raise DataError("cannot grow a tree on an empty in-bag sample")
    wr, yr = w[root_rows], y[root_rows]
    root_mean = np.dot(wr, yr) / wr.sum()
    root_var = np.dot(wr, (yr - root_mean) ** 2) / wr.sum()
    tol = ZERO_GAIN_TOL * root_var

    feature, threshold, left, right, n_node, value = [], [], [], [], [], []
    split_order = []

    def new_node(rows):
        wn = w[rows]
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        n_node.append(wn.sum())
        value.append(np.dot(wn, y[rows]) / wn.sum())
        return len(feature) - 1

    stack = [(new_node(root_rows), root_rows, 0)]
    while stack:
        node, rows, depth = stack.pop()
        if depth >= max_depth or n_node[node] < 2 * min_leaf or root_var <= 0:
            continue
        yn = y[rows]
        if yn.min() == yn.max():
            continue
        if mf < p:
            feats = np.sort(gen.choice(p, size=mf, replace=False)).astype(np.intp)
        else:
            feats = np.arange(p, dtype=np.intp)
        f, thr, _ = kernels.best_split(Xt, y, w, rows, feats, min_leaf, tol)
        if f < 0:
            continue
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node], threshold[node] = int(f), float(thr)
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        split_order.append(node)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))

    return Tree(feature, threshold, left, right, n_node, value, split_order, p)


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple
    bootstraps: tuple
    params: ForestParams
    task: str
    n_features: int
    seed: int = 0
    stream_id: int = 0
    column_names: tuple = field(default=())

    def __len__(self):
        return len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"query matrix must have {self.n_features} columns, got shape {X.shape}")
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def subset(self, indices) -> "Forest":
        """Forest made of the given trees (repeats allowed)."""
        idx = [int(i) for i in indices]
        return Forest(
            tuple(self.trees[i] for i in idx), tuple(self.bootstraps[i] for i in idx),
            self.params, self.task, self.n_features, self.seed, self.stream_id, self.column_names,
        )

    def to_dict(self) -> dict:
        trees = []
        for tree, boot in zip(self.trees, self.bootstraps):
            d = tree.to_dict()
            d["in_bag"] = [int(i) for i in boot.in_bag]
            trees.append(d)
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "forest",
            "task": self.task,
            "n_features": self.n_features,
            "column_names": list(self.column_names),
            "seed": self.seed,
            "stream_id": self.stream_id,
            "params": asdict(self.params),
            "trees": trees,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported forest schema_version {d.get('schema_version')!r}")
        p = int(d["n_features"])
        trees, boots = [], []
        for td in d["trees"]:
            trees.append(Tree.from_dict(td, p))
            in_bag = np.asarray(td["in_bag"], dtype=np.intp)
            boots.append(BootstrapIndex.from_in_bag(in_bag, len(in_bag)))
        return cls(tuple(trees), tuple(boots), ForestParams(**d["params"]), d["task"], p,
                   d.get("seed", 0), d.get("stream_id", 0), tuple(d.get("column_names", ())))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=None, separators=(",", ":"))

    def save(self, path):
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Forest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _grow_one(data, params, rng, t):
    stream = rng.child(t)
    if params.bootstrap:
        boot = bootstrap_sample(data.n, stream.child(0))
    else:
        boot = BootstrapIndex.full(data.n)
    tree = grow_tree(data.X, data.y, boot.counts, params, stream.child(1), data.task)
    return tree, boot


def fit_forest(data: Dataset, params: ForestParams | None = None, rng: SeededRng | None = None,
               threads: int = 1) -> Forest:
    """Fit ``params.n_trees`` trees, each on its own bootstrap and random stream.

    Results do not depend on ``threads``: stream ``t`` always feeds tree ``t``.
    """
    params = params or ForestParams.for_task(data.task)
    params.validate(data.p, data.task)
    rng = rng or SeededRng(0)
    if threads > 1 and params.n_trees > 1:
        with ThreadPoolExecutor(threads) as pool:
            grown = list(pool.map(lambda t: _grow_one(data, params, rng, t), range(params.n_trees)))
    else:
        grown = [_grow_one(data, params, rng, t) for t in range(params.n_trees)]
    trees, boots = zip(*grown)
    return Forest(tuple(trees), tuple(boots), params, data.task, data.p, rng.seed, rng.stream_id,
                  data.column_names)


def predict(forest: Forest, X) -> np.ndarray:
    return forest.predict(X)
