"""Local decision stump features of a fitted tree.

Every split s of node t contributes one column

    psi(x) = [N(t_R) 1{x in t_L} - N(t_L) 1{x in t_R}] / sqrt(N(t_L) N(t_R)),

with counts taken from the tree's in-bag sample. Columns are grouped into
contiguous blocks by split feature; :func:`augment` appends the raw feature
to every non-empty block.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mdiplus._backend import kernels
from mdiplus.exceptions import ConfigError
from mdiplus.forest import Tree


@dataclass(frozen=True)
class StumpColumn:
    split_ref: int
    feature: int
    scale_left: float
    scale_right: float


def stump_columns(tree: Tree) -> list[StumpColumn]:
    """Stump descriptors in block order (by feature, then creation order)."""
    nodes = tree.split_order
    feats = tree.feature[nodes]
    order = np.argsort(feats, kind="stable")
    out = []
    for node in nodes[order]:
        nl = tree.n_node[tree.left[node]]
        nr = tree.n_node[tree.right[node]]
        root = np.sqrt(nl * nr)
        out.append(StumpColumn(int(node), int(tree.feature[node]), nr / root, -nl / root))
    return out


def stump_value(x, column: StumpColumn, tree: Tree) -> float:
    """Value of one stump at a single point; 0 if the point never reaches the node."""
    node = 0
    while tree.feature[node] >= 0:
        go_left = x[tree.feature[node]] <= tree.threshold[node]
        if node == column.split_ref:
            return column.scale_left if go_left else column.scale_right
        node = tree.left[node] if go_left else tree.right[node]
    return 0.0


@dataclass(frozen=True, eq=False)
class TransformedMatrix:
    """Stump design matrix with its block layout.

    ``blocks[k]`` is the column range holding feature ``k``;
    ``raw_columns[k]`` is the index of the appended raw column or ``None``;
    ``column_feature[j]`` and ``column_node[j]`` describe column ``j``
    (``column_node`` is -1 for raw columns). ``tree`` and ``leaf_of_row``
    (leaf reached by each evaluation row) let the GLM solver exploit the
    tree structure.
    """

    values: np.ndarray
    blocks: dict
    augmented: bool
    raw_columns: dict
    column_feature: np.ndarray
    column_node: np.ndarray
    tree: Tree | None = None
    leaf_of_row: np.ndarray | None = None

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    @property
    def is_raw(self) -> np.ndarray:
        return self.column_node < 0

    def block(self, k: int) -> range:
        return self.blocks[k]

    def nonempty(self, k: int) -> bool:
        return len(self.blocks[k]) > 0

    def stump_columns_by_node(self) -> list[StumpColumn]:
        return stump_columns(self.tree)


def _layout(tree: Tree, augmented: bool):
    p = tree.n_features
    cols = stump_columns(tree)
    column_feature, column_node = [], []
    blocks, raw = {}, {}
    j = 0
    by_k = {k: [] for k in range(p)}
    for c in cols:
        by_k[c.feature].append(c)
    for k in range(p):
        start = j
        for c in by_k[k]:
            column_feature.append(k)
            column_node.append(c.split_ref)
            j += 1
        if augmented and by_k[k]:
            column_feature.append(k)
            column_node.append(-1)
            raw[k] = j
            j += 1
        else:
            raw[k] = None
        blocks[k] = range(start, j)
    return cols, np.asarray(column_feature, dtype=np.intp), np.asarray(column_node, dtype=np.intp), blocks, raw


def transform(X, tree: Tree, augment_raw: bool = False) -> TransformedMatrix:
    """Evaluate every stump of ``tree`` on the rows of ``X``.

    Scales always come from the tree's in-bag counts, whichever rows are
    evaluated.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != tree.n_features:
        raise ConfigError(f"X must have {tree.n_features} columns, got shape {X.shape}")
    cols, column_feature, column_node, blocks, raw = _layout(tree, augment_raw)
    m = len(column_node)
    out = np.zeros((X.shape[0], m))
    if cols:
        nn = tree.n_nodes
        col_of_node = np.full(nn, -1, dtype=np.intp)
        sl = np.zeros(nn)
        sr = np.zeros(nn)
        stump_pos = np.flatnonzero(column_node >= 0)
        for pos, c in zip(stump_pos, cols):
            col_of_node[c.split_ref] = pos
            sl[c.split_ref] = c.scale_left
            sr[c.split_ref] = c.scale_right
        kernels.fill_stumps(X, tree.feature, tree.threshold, tree.left, tree.right,
                            col_of_node, sl, sr, out)
    for k, j in raw.items():
        if j is not None:
            out[:, j] = X[:, k]
    leaves = kernels.apply(X, tree.feature, tree.threshold, tree.left, tree.right)
    return TransformedMatrix(out, blocks, augment_raw, raw, column_feature, column_node, tree, leaves)


def augment(tm: TransformedMatrix, X) -> TransformedMatrix:
    """Append raw feature ``k`` to every non-empty block ``k``."""
    if tm.augmented:
        raise ConfigError("matrix is already augmented")
    X = np.asarray(X, dtype=np.float64)
    p = len(tm.blocks)
    pieces, column_feature, column_node = [], [], []
    blocks, raw = {}, {}
    j = 0
    for k in range(p):
        b = tm.blocks[k]
        start = j
        if len(b):
            pieces.append(tm.values[:, b.start:b.stop])
            column_feature.extend(tm.column_feature[b.start:b.stop])
            column_node.extend(tm.column_node[b.start:b.stop])
            pieces.append(X[:, k:k + 1])
            column_feature.append(k)
            column_node.append(-1)
            j += len(b)
            raw[k] = j
            j += 1
        else:
            raw[k] = None
        blocks[k] = range(start, j)
    values = np.hstack(pieces) if pieces else np.zeros((tm.values.shape[0], 0))
    return TransformedMatrix(values, blocks, True, raw,
                             np.asarray(column_feature, dtype=np.intp), np.asarray(column_node, dtype=np.intp),
                             tm.tree, tm.leaf_of_row)


def partial_design(tm: TransformedMatrix, k: int, means=None) -> np.ndarray:
    """Copy of the design with every column outside block ``k`` set to its mean.

    ``means`` defaults to column means over the rows of ``tm``.
    """
    if not 0 <= k < len(tm.blocks):
        raise ConfigError(f"feature index {k} out of range")
    means = tm.values.mean(axis=0) if means is None else np.asarray(means)
    out = np.broadcast_to(means, tm.values.shape).copy()
    b = tm.blocks[k]
    out[:, b.start:b.stop] = tm.values[:, b.start:b.stop]
    return out


def expand_rows(tm: TransformedMatrix, rows) -> TransformedMatrix:
    """Row subset (with repeats) of a transformed matrix."""
    rows = np.asarray(rows)
    leaves = None if tm.leaf_of_row is None else tm.leaf_of_row[rows]
    return TransformedMatrix(tm.values[rows], tm.blocks, tm.augmented, tm.raw_columns,
                             tm.column_feature, tm.column_node, tm.tree, leaves)
