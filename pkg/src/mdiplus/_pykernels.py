"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``.

Split search and routing are bit-identical to the compiled path (the sort
is stable and cumulative sums run in the same sequential order). The
Cholesky kernels go through dense LAPACK and agree to rounding.
"""
import numpy as np
from scipy import linalg


def best_split(Xt, y, w, rows, features, min_leaf, tol):
    """Return ``(feature, threshold, gain)`` of the best split, feature -1 if none."""
    if rows.shape[0] < 2:
        return -1, 0.0, 0.0
    best_gain = tol
    best = (-1, 0.0, 0.0)
    w_node = w[rows]
    y_node = y[rows]
    for f in features:
        x = Xt[f, rows]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        if xs[0] == xs[-1]:
            continue
        ws = w_node[order]
        cw = np.cumsum(ws)
        cs = np.cumsum(ws * y_node[order])
        total_w, total_s = cw[-1], cs[-1]
        wl, sl = cw[:-1], cs[:-1]
        wr = total_w - wl
        valid = (xs[:-1] != xs[1:]) & (wl >= min_leaf) & (wr >= min_leaf)
        if not valid.any():
            continue
        sr = total_s - sl
        with np.errstate(divide="ignore", invalid="ignore"):
            d = sl / wl - sr / wr
            gain = (wl * wr) / (total_w * total_w) * (d * d)
        gain = np.where(valid, gain, -np.inf)
        j = int(np.argmax(gain))
        if gain[j] > best_gain:
            best_gain = gain[j]
            mid = (xs[j] + xs[j + 1]) / 2.0
            if mid >= xs[j + 1]:
                mid = xs[j]
            best = (int(f), float(mid), float(gain[j]))
    return best


def _walk(X, feature, threshold, left, right, visit=None):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.intp)
    rows = np.arange(n)
    active = feature[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[active]
        go_left = X[r, feature[nd]] <= threshold[nd]
        if visit is not None:
            visit(r, nd, go_left)
        node[r] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node


def apply(X, feature, threshold, left, right):
    """Leaf node id reached by every row of ``X``."""
    return _walk(X, feature, threshold, left, right)


def fill_stumps(X, feature, threshold, left, right, column, scale_left, scale_right, out):
    """Write stump values into the zero-initialised ``out`` (rows x columns)."""

    def visit(r, nd, go_left):
        out[r, column[nd]] = np.where(go_left, scale_left[nd], scale_right[nd])

    _walk(X, feature, threshold, left, right, visit)


def _pattern(ptr, row):
    cols = np.repeat(np.arange(ptr.shape[0] - 1), np.diff(ptr))
    return cols, row


def path_cholesky(ptr, row, val):
    """Factor in place; returns -1 on success or the node with a non-positive pivot.

    Dense stand-in for the compiled kernel: with ids eliminated from high to
    low the factor has no fill, so the dense Cholesky lands on the same
    pattern.
    """
    M = ptr.shape[0] - 1
    cols, rows = _pattern(ptr, row)
    H = np.zeros((M, M))
    H[rows, cols] = val
    H[cols, rows] = val
    rev = H[::-1, ::-1]
    try:
        Lr = linalg.cholesky(rev, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return M - 1
    L = Lr[::-1, ::-1]
    val[:] = L[rows, cols]
    return -1


def path_solve(ptr, row, val, B, forward_only=False):
    """Solve ``L L' x = b`` (or only ``L y = b``) in place for every row ``b`` of ``B``."""
    M = ptr.shape[0] - 1
    cols, rows = _pattern(ptr, row)
    U = np.zeros((M, M))
    U[rows, cols] = val
    Y = linalg.solve_triangular(U, B.T, lower=False, check_finite=False)
    if not forward_only:
        Y = linalg.solve_triangular(U, Y, lower=False, trans="T", check_finite=False)
    B[:] = Y.T
