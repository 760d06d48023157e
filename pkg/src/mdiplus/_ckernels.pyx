# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled hot loops: split search, tree routing and path-structured Cholesky.

Each function mirrors one in ``_pykernels``. Split search and routing are
bit-identical to the fallback (ties broken by position, sums accumulated in
the same order); the Cholesky kernels agree to rounding.
"""
import numpy as np

from libc.math cimport sqrt
from libcpp.algorithm cimport sort
from libcpp.utility cimport pair
from libcpp.vector cimport vector


ctypedef pair[double, Py_ssize_t] keyed


def best_split(const double[:, ::1] Xt, const double[::1] y, const double[::1] w,
               const Py_ssize_t[::1] rows, const Py_ssize_t[::1] features,
               double min_leaf, double tol):
    """Return ``(feature, threshold, gain)`` of the best split, feature -1 if none."""
    cdef Py_ssize_t n_rows = rows.shape[0]
    cdef Py_ssize_t n_feat = features.shape[0]
    cdef vector[keyed] order
    cdef Py_ssize_t fi, f, i, r, r_next
    cdef double wl, sl, wr, sr, total_w, total_s, d, gain, x_here, x_next, mid
    cdef double best_gain = tol
    cdef Py_ssize_t best_feature = -1
    cdef double best_threshold = 0.0

    if n_rows < 2:
        return -1, 0.0, 0.0
    order.resize(n_rows)
    with nogil:
        for fi in range(n_feat):
            f = features[fi]
            for i in range(n_rows):
                r = rows[i]
                order[i].first = Xt[f, r]
                order[i].second = i
            sort(order.begin(), order.end())
            if order[0].first == order[n_rows - 1].first:
                continue
            total_w = 0.0
            total_s = 0.0
            for i in range(n_rows):
                r = rows[order[i].second]
                total_w = total_w + w[r]
                total_s = total_s + w[r] * y[r]
            wl = 0.0
            sl = 0.0
            for i in range(n_rows - 1):
                r = rows[order[i].second]
                wl = wl + w[r]
                sl = sl + w[r] * y[r]
                x_here = order[i].first
                x_next = order[i + 1].first
                if x_here == x_next:
                    continue
                wr = total_w - wl
                if wl < min_leaf or wr < min_leaf:
                    continue
                sr = total_s - sl
                d = sl / wl - sr / wr
                gain = (wl * wr) / (total_w * total_w) * (d * d)
                if gain > best_gain:
                    best_gain = gain
                    best_feature = f
                    mid = (x_here + x_next) / 2.0
                    if mid >= x_next:
                        mid = x_here
                    best_threshold = mid
    if best_feature < 0:
        return -1, 0.0, 0.0
    return best_feature, best_threshold, best_gain


def apply(const double[:, ::1] X, const Py_ssize_t[::1] feature,
          const double[::1] threshold, const Py_ssize_t[::1] left,
          const Py_ssize_t[::1] right):
    """Leaf node id reached by every row of ``X``."""
    cdef Py_ssize_t n = X.shape[0]
    out = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] leaf = out
    cdef Py_ssize_t i, node
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            leaf[i] = node
    return out


def fill_stumps(const double[:, ::1] X, const Py_ssize_t[::1] feature,
                const double[::1] threshold, const Py_ssize_t[::1] left,
                const Py_ssize_t[::1] right, const Py_ssize_t[::1] column,
                const double[::1] scale_left, const double[::1] scale_right,
                double[:, ::1] out):
    """Write stump values into the zero-initialised ``out`` (rows x columns).

    ``column[node]`` is the output column of the split at ``node``.
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t i, node
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    out[i, column[node]] = scale_left[node]
                    node = left[node]
                else:
                    out[i, column[node]] = scale_right[node]
                    node = right[node]


# Path-structured Cholesky. Node u stores, at val[ptr[u]:ptr[u + 1]], the
# entries of column u against its ancestors (top first) followed by its
# diagonal; row[] holds the matching node ids. Ancestors carry smaller ids,
# so eliminating ids from high to low produces no fill.

def path_cholesky(const Py_ssize_t[::1] ptr, const Py_ssize_t[::1] row, double[::1] val):
    """Factor in place; returns -1 on success or the node with a non-positive pivot."""
    cdef Py_ssize_t M = ptr.shape[0] - 1
    cdef Py_ssize_t u, o, d, i, j, ob
    cdef double piv, lj
    cdef Py_ssize_t failed = -1
    with nogil:
        for u in range(M - 1, -1, -1):
            o = ptr[u]
            d = ptr[u + 1] - o - 1
            piv = val[o + d]
            if not piv > 0.0:
                failed = u
                break
            piv = sqrt(piv)
            val[o + d] = piv
            for i in range(d):
                val[o + i] = val[o + i] / piv
            for j in range(d):
                ob = ptr[row[o + j]]
                lj = val[o + j]
                for i in range(j + 1):
                    val[ob + i] = val[ob + i] - val[o + i] * lj
    return failed


def path_solve(const Py_ssize_t[::1] ptr, const Py_ssize_t[::1] row, const double[::1] val,
               double[:, ::1] B, bint forward_only=False):
    """Solve ``L L' x = b`` (or only ``L y = b``) in place for every row ``b`` of ``B``."""
    cdef Py_ssize_t M = ptr.shape[0] - 1
    cdef Py_ssize_t k, u, o, d, i
    cdef double yu, acc
    with nogil:
        for k in range(B.shape[0]):
            for u in range(M - 1, -1, -1):
                o = ptr[u]
                d = ptr[u + 1] - o - 1
                yu = B[k, u] / val[o + d]
                B[k, u] = yu
                if yu != 0.0:
                    for i in range(d):
                        B[k, row[o + i]] -= val[o + i] * yu
            if forward_only:
                continue
            for u in range(M):
                o = ptr[u]
                d = ptr[u + 1] - o - 1
                acc = B[k, u]
                for i in range(d):
                    acc = acc - val[o + i] * B[k, row[o + i]]
                B[k, u] = acc / val[o + d]
