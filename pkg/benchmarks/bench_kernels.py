"""Compiled vs numpy kernels: split search, routing, stump filling and the
tree-structured Cholesky factor/solve, plus an end-to-end forest + MDI+ run
under each backend.

    python benchmarks/bench_kernels.py [--n 1000] [--p 10] [--repeat 5]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mdiplus import _pykernels, glm
from mdiplus.data import Dataset, SeededRng
from mdiplus.forest import ForestParams, fit_forest
from mdiplus.stumps import transform

try:
    from mdiplus import _ckernels
except ImportError:
    _ckernels = None

E2E = """
import time, numpy as np
from mdiplus import BACKEND
from mdiplus.data import Dataset, SeededRng
from mdiplus.forest import ForestParams, fit_forest
from mdiplus.importance import mdi_plus
rng = np.random.default_rng(0)
X = rng.standard_normal(({n}, {p})); y = X[:, 0] + rng.standard_normal({n})
d = Dataset(X, y)
t0 = time.perf_counter()
f = fit_forest(d, ForestParams.for_task("regression", n_trees=20), SeededRng(1))
t1 = time.perf_counter()
mdi_plus(f, d)
t2 = time.perf_counter()
print(BACKEND, t1 - t0, t2 - t1)
"""


class _Capture:
    """Records the arguments of the first Cholesky call made through it."""

    def __init__(self, inner):
        self.inner = inner
        self.args = None

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def path_cholesky(self, ptr, row, val):
        if self.args is None:
            self.args = (ptr.copy(), row.copy(), val.copy())
        return self.inner.path_cholesky(ptr, row, val)


def _problem(n, p, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = X[:, 0] + 0.5 * X[:, 1] + rng.standard_normal(n)
    return X, y


def _best(stmt, repeat):
    return min(timeit.repeat(stmt, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--p", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; nothing to compare")
        return 1

    X, y = _problem(args.n, args.p)
    Xt = np.ascontiguousarray(X.T)
    w = np.ones(args.n)
    rows = np.arange(args.n, dtype=np.intp)
    feats = np.arange(args.p, dtype=np.intp)
    forest = fit_forest(Dataset(X, y), ForestParams.for_task("regression", n_trees=1, min_samples_leaf=1),
                        SeededRng(0))
    tree = forest.trees[0]
    tm = transform(X, tree, augment_raw=True)
    nodes = tree.n_nodes
    col = np.full(nodes, -1, dtype=np.intp)
    col[tree.split_order] = np.arange(tree.split_order.size)
    sl = np.ones(nodes)
    sr = -np.ones(nodes)

    cap = _Capture(_ckernels)
    saved = glm.kernels
    glm.kernels = cap
    try:
        glm.fit_regularized(tm, (y > 0).astype(float), glm.GlmSpec("logistic-l2", lambda_grid=[1.0]))
    finally:
        glm.kernels = saved
    ptr, row, val0 = cap.args
    B = np.random.default_rng(1).standard_normal((64, ptr.size - 1))

    print(f"n={args.n} p={args.p} tree nodes={nodes} factor size={ptr.size - 1} nnz={row.size}")
    print(f"{'kernel':<16}{'cython (ms)':>14}{'python (ms)':>14}{'speed-up':>10}")
    for name, call in [
        ("best_split", lambda k: k.best_split(Xt, y, w, rows, feats, 1.0, 1e-12)),
        ("apply", lambda k: k.apply(X, tree.feature, tree.threshold, tree.left, tree.right)),
        ("fill_stumps", lambda k: k.fill_stumps(X, tree.feature, tree.threshold, tree.left, tree.right,
                                                col, sl, sr, np.zeros((args.n, col.max() + 1)))),
        ("path_cholesky", lambda k: k.path_cholesky(ptr, row, val0.copy())),
        ("path_solve", lambda k: k.path_solve(ptr, row, val0, B.copy())),
    ]:
        tc = _best(lambda: call(_ckernels), args.repeat) * 1e3
        tp = _best(lambda: call(_pykernels), args.repeat) * 1e3
        print(f"{name:<16}{tc:>14.3f}{tp:>14.3f}{tp / tc:>10.1f}")

    print("\nend to end (20 trees, ridge MDI+): backend, fit s, mdi+ s")
    code = E2E.format(n=args.n, p=args.p)
    for backend in ("cython", "python"):
        env = dict(os.environ, MDIPLUS_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        print("  " + out.stdout.strip())
    return 0


if __name__ == "__main__":
    sys.exit(main())
