"""Penalised GLMs with leave-one-out tuning.

Every family minimises

    sum_i loss(y_i, alpha + z_i . beta) + lam/2 * ||beta||^2

with the intercept unpenalised (``ols`` is ``lam = 0``). The penalty is
selected from a grid by leave-one-out loss. For squared loss the LOO
coefficients come from an exact rank-one downdate; for logistic and Huber
loss they are a single Newton step from the full-data optimum:

    theta_{-i} = theta + H^{-1} x_i g_i / (1 - w_i x_i' H^{-1} x_i),

where ``g_i`` and ``w_i`` are the first and second derivatives of the loss of
row ``i`` in its linear predictor and ``H`` the penalised Hessian.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy import sparse
from scipy.special import expit

from mdiplus._backend import kernels
from mdiplus.exceptions import ConfigError, ConvergenceError, DegenerateLeverageError
from mdiplus.stumps import TransformedMatrix

FAMILIES = ("ols", "ridge", "logistic-l2", "huber-ridge")
FAMILY_ALIASES = {"logistic": "logistic-l2", "huber": "huber-ridge"}
PROB_CLAMP = 1e-12
HUBER_CONSTANT = 1.35
_MAD_TO_SD = 1.4826
_LEVERAGE_EPS = 1e-10


def default_lambda_grid(n_rows: int, size: int = 20) -> np.ndarray:
    return np.logspace(-4, 4, size) * max(n_rows, 1)


@dataclass(frozen=True)
class GlmSpec:
    family: str = "ridge"
    lambda_grid: tuple | None = None
    huber_delta: float | None = None
    max_iter: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        fam = FAMILY_ALIASES.get(self.family, self.family)
        if fam not in FAMILIES:
            raise ConfigError(f"unknown GLM family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", fam)
        if self.lambda_grid is not None:
            grid = tuple(float(v) for v in np.atleast_1d(self.lambda_grid))
            if not grid:
                raise ConfigError("lambda_grid must not be empty")
            if fam != "ols" and min(grid) <= 0:
                raise ConfigError("lambda_grid must be strictly positive for regularised families")
            object.__setattr__(self, "lambda_grid", grid)
        if self.huber_delta is not None and self.huber_delta <= 0:
            raise ConfigError("huber_delta must be positive")

    @property
    def link(self) -> str:
        return "logit" if self.family == "logistic-l2" else "identity"

    def grid(self, n_rows: int) -> np.ndarray:
        if self.family == "ols":
            return np.array([0.0])
        if self.lambda_grid is None:
            return default_lambda_grid(n_rows)
        return np.asarray(self.lambda_grid, dtype=float)


@dataclass(frozen=True, eq=False)
class GlmFit:
    """Fitted coefficients on the original column scale plus LOO state.

    ``loo_path`` holds ``(lambda, loo_loss)`` for every grid value tried.
    """

    beta: np.ndarray
    alpha: float
    lam: float
    link: str
    family: str
    column_centers: np.ndarray
    column_scales: np.ndarray
    n_rows: int
    huber_delta: float | None = None
    loo_path: np.ndarray | None = None
    _loo: "_LooState | None" = field(default=None, repr=False)

    @property
    def n_columns(self) -> int:
        return self.beta.shape[0]

    @property
    def has_loo(self) -> bool:
        return self._loo is not None

    def without_loo(self) -> "GlmFit":
        """Copy without the per-row LOO state (which holds O(rows x columns) memory)."""
        return replace(self, _loo=None)


class _LooState:
    """Row ``i``'s LOO parameters are ``theta + direction[:, i] * step[i]``.

    ``direction`` (parameters x rows) is built on first use.
    """

    def __init__(self, theta, direction_fn, step, degenerate, refit):
        self.theta = theta
        self._direction_fn = direction_fn
        self._direction = None
        self.step = step
        self.degenerate = degenerate
        self.refit = refit

    @property
    def direction(self):
        if self._direction is None:
            self._direction = self._direction_fn()
        return self._direction


def _standardise(Z, standardize):
    m = Z.shape[1]
    centers = np.zeros(m)
    scales = np.ones(m)
    mask = np.zeros(m, dtype=bool) if standardize is None else np.asarray(standardize, dtype=bool)
    if not mask.any():
        return Z, centers, scales
    sub = Z[:, mask]
    c = sub.mean(axis=0)
    s = sub.std(axis=0)
    s[s == 0] = 1.0
    centers[mask] = c
    scales[mask] = s
    D = Z.copy()
    D[:, mask] = (sub - c) / s
    return D, centers, scales


def _to_original(theta, centers, scales):
    """(intercept, standardised coefs) -> (alpha, beta) on the raw column scale."""
    beta = theta[..., 1:] / scales
    alpha = theta[..., 0] - beta @ centers
    return alpha, beta


# ---------------------------------------------------------------- losses


def _huber(r, delta):
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * a - 0.5 * delta * delta)


def _log_loss(y, eta):
    # -[y log p + (1-y) log(1-p)] with p = expit(eta), for 0/1 y
    return np.logaddexp(0.0, eta) - y * eta


def _clamped_log_loss(y, p):
    p = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    return -(y * np.log(p) + (1 - y) * np.log1p(-p))


# ---------------------------------------------------------- squared loss


class _SquaredPath:
    """Thin SVD of the centred design; every lambda costs O(n r)."""

    def __init__(self, D, y):
        self.n = D.shape[0]
        self.y = y
        self.ybar = y.mean()
        self.mean = D.mean(axis=0)
        Dc = D - self.mean
        if D.shape[1]:
            U, s, Vt = linalg.svd(Dc, full_matrices=False, lapack_driver="gesdd", check_finite=False)
            keep = s > s[0] * max(D.shape) * np.finfo(float).eps if s.size else s > 0
            self.U, self.s, self.Vt = U[:, keep], s[keep], Vt[keep]
        else:
            self.U, self.s, self.Vt = np.zeros((self.n, 0)), np.zeros(0), np.zeros((0, 0))
        self.Uty = self.U.T @ (y - self.ybar)

    def solve(self, lam):
        s2 = self.s**2
        coef = self.Vt.T @ (self.s / (s2 + lam) * self.Uty)
        shrink = s2 / (s2 + lam)
        fitted = self.ybar + self.U @ (shrink * self.Uty)
        lev = 1.0 / self.n + (self.U**2) @ shrink
        theta = np.concatenate([[self.ybar - self.mean @ coef], coef])
        return theta, fitted, lev

    def loo_direction(self, lam):
        """Columns are A^{-1} x_i for the (intercept, coef) parameterisation."""
        d_coef = self.Vt.T @ ((self.s / (self.s**2 + lam))[:, None] * self.U.T)
        d_int = 1.0 / self.n - self.mean @ d_coef
        return np.vstack([d_int[None, :], d_coef])


def _exact_refit_theta(D, y, lam, i, family_solver):
    keep = np.ones(D.shape[0], dtype=bool)
    keep[i] = False
    if keep.sum() == 0:
        return np.zeros(D.shape[1] + 1)
    return family_solver(D[keep], y[keep], lam)


def _squared_solve(D, y, lam):
    return _SquaredPath(D, y).solve(lam)[0]


def _fit_squared(D, y, grid):
    path = _SquaredPath(D, y)
    n = D.shape[0]
    losses = []
    best = None
    for lam in grid:
        theta, fitted, lev = path.solve(lam)
        resid = y - fitted
        denom = 1.0 - lev
        bad = denom <= _LEVERAGE_EPS
        loo_resid = np.where(bad, 0.0, resid / np.where(bad, 1.0, denom))
        for i in np.flatnonzero(bad):
            th = _exact_refit_theta(D, y, lam, i, _squared_solve)
            loo_resid[i] = y[i] - (th[0] + D[i] @ th[1:])
        loss = float(np.mean(loo_resid**2))
        losses.append((lam, loss))
        if best is None or loss < best[1]:
            best = (lam, loss, theta, resid, denom, bad)
    lam, _, theta, resid, denom, bad = best
    direction = (lambda: path.loo_direction(lam)) if n > 1 else (lambda: None)
    step = -resid / np.where(bad, 1.0, denom)
    refit = (lambda i, D=D, y=y, lam=lam: _exact_refit_theta(D, y, lam, i, _squared_solve))
    state = _LooState(theta, direction, step, bad, refit)
    return lam, theta, np.asarray(losses), state


# ----------------------------------------------------- Newton (logistic / Huber)


class _DenseDesign:
    """``[1, D]`` held as a dense matrix; parameters ordered (intercept, columns)."""

    def __init__(self, D):
        self.X = np.hstack([np.ones((D.shape[0], 1)), D])
        self.n_params = self.X.shape[1]

    def eta(self, theta):
        return self.X @ theta

    def rmatvec(self, g):
        return self.X.T @ g

    def factor(self, w, pen):
        H = (self.X.T * w) @ self.X
        H[np.diag_indices_from(H)] += pen
        return _psd_factor(H)

    def solve(self, factor, b):
        return linalg.cho_solve(factor, b, check_finite=False)

    def leverage_q(self, factor):
        V = linalg.solve_triangular(factor[0], self.X.T, lower=True, check_finite=False)
        return np.einsum("ij,ij->j", V, V)

    def directions(self, factor):
        return linalg.cho_solve(factor, self.X.T, check_finite=False)


class _TreeDesign:
    """``[1, Z]`` for a stump design with raw columns, factored along tree paths.

    Internally the intercept and raw columns form a chain above the root
    split and stumps follow in pre-order, so every parameter's Hessian
    column is non-zero only at its ancestors. Row-level sums collapse to
    per-leaf sums for the stump part.
    """

    def __init__(self, tm, D):
        tree = tm.tree
        n, m = D.shape
        raw_cols = np.flatnonzero(tm.column_node < 0)
        q = 1 + raw_cols.size
        self.q = q
        self.n_params = m + 1
        self.n_rows = n

        # ancestor tables: P[k, v] is the k-th ancestor of v (-1 above the root)
        parent = tree.parent
        N = tree.n_nodes
        P = [np.arange(N)]
        while True:
            nxt = np.where(P[-1] >= 0, parent[np.maximum(P[-1], 0)], -1)
            if np.all(nxt < 0):
                break
            P.append(nxt)
        P = np.array(P)
        depth = np.sum(P >= 0, axis=0) - 1
        is_split = tree.feature >= 0
        nl = tree.n_node[tree.left[is_split]]
        nr = tree.n_node[tree.right[is_split]]
        root = np.sqrt(nl * nr)
        s_left = np.zeros(N)
        s_right = np.zeros(N)
        s_left[is_split] = nr / root
        s_right[is_split] = -nl / root

        # ancestors sit at smaller internal ids: order splits by depth
        split_nodes = np.flatnonzero(is_split)
        order = split_nodes[np.lexsort((split_nodes, depth[split_nodes]))]
        ms = order.size
        internal = np.full(N, -1, dtype=np.intp)
        internal[order] = q + np.arange(ms)
        col_of_node = np.full(N, -1, dtype=np.intp)
        stump_cols = np.flatnonzero(tm.column_node >= 0)
        col_of_node[tm.column_node[stump_cols]] = stump_cols
        perm = np.empty(q + ms, dtype=np.intp)
        perm[0] = 0
        perm[1:q] = raw_cols + 1
        perm[q:] = col_of_node[order] + 1
        self.perm = perm

        def ancestors(nodes):
            # (owner position, ancestor node, stump value on the owner's side), top first
            d = depth[nodes]
            dm = int(d.max()) if nodes.size else 0
            j = np.arange(dm)
            mask = j[None, :] < d[:, None]
            lvl = np.where(mask, d[:, None] - j[None, :], 0)
            anc = P[lvl, nodes[:, None]]
            toward = P[np.maximum(lvl - 1, 0), nodes[:, None]]
            owner = np.broadcast_to(np.arange(nodes.size)[:, None], mask.shape)[mask]
            a = anc[mask]
            c = toward[mask]
            psi = np.where(tree.left[a] == c, s_left[a], s_right[a])
            return owner, a, psi

        d_split = depth[order]
        sizes = np.concatenate([np.arange(1, q + 1), q + d_split + 1])
        ptr = np.zeros(q + ms + 1, dtype=np.intp)
        np.cumsum(sizes, out=ptr[1:])
        row = np.empty(ptr[-1], dtype=np.intp)
        tail_rows = np.concatenate([np.arange(t + 1) for t in range(q)])
        row[:ptr[q]] = tail_rows
        stump_ptr = ptr[q:-1]
        tail_entry = (stump_ptr[:, None] + np.arange(q)[None, :]).ravel()
        row[tail_entry] = np.tile(np.arange(q), ms)
        owner, a, psi = ancestors(order)
        within = np.arange(owner.size) - np.searchsorted(owner, owner)
        anc_entry = stump_ptr[owner] + q + within
        row[anc_entry] = internal[a]
        self.diag_entry = ptr[1:] - 1
        row[self.diag_entry] = np.arange(q + ms)
        self.ptr, self.row = ptr, row
        self.tail_entry = tail_entry
        self.tail_owner = np.repeat(np.arange(ms), q)
        self.tail_col = np.tile(np.arange(q), ms)
        self.anc_entry, self.anc_owner, self.anc_psi = anc_entry, owner, psi
        self.tail_rows = tail_rows
        self.tail_cols = np.repeat(np.arange(q), np.arange(1, q + 1))
        self.tail_flat = ptr[:q].repeat(np.arange(1, q + 1)) + tail_rows

        # leaves: compact ids and stump values along each leaf's path
        leaf_nodes = np.flatnonzero(~is_split)
        compact = np.full(N, -1, dtype=np.intp)
        compact[leaf_nodes] = np.arange(leaf_nodes.size)
        self.leaf = compact[tm.leaf_of_row]
        self.n_leaves = leaf_nodes.size
        lo, la, lpsi = ancestors(leaf_nodes)
        self.C = sparse.csr_matrix((lpsi, (lo, internal[la] - q)), shape=(self.n_leaves, ms))
        self.C_dense = self.C.toarray()
        self.Ct = self.C.T.tocsr()
        self.C2t = self.C.multiply(self.C).T.tocsr()
        self.R = sparse.csr_matrix((np.ones(n), (self.leaf, np.arange(n))), shape=(self.n_leaves, n))
        self.Xtail = np.hstack([np.ones((n, 1)), D[:, raw_cols]])

    def _to_internal(self, theta):
        return theta[self.perm]

    def _leaf_sum(self, v):
        if v.ndim == 1:
            return np.bincount(self.leaf, weights=v, minlength=self.n_leaves)
        return self.R @ v

    def eta(self, theta):
        ti = self._to_internal(theta)
        q = self.q
        return (self.C @ ti[q:])[self.leaf] + self.Xtail @ ti[:q]

    def rmatvec(self, g):
        q = self.q
        out_i = np.empty(self.n_params)
        out_i[:q] = self.Xtail.T @ g
        out_i[q:] = self.Ct @ self._leaf_sum(g)
        out = np.empty_like(out_i)
        out[self.perm] = out_i
        return out

    def factor(self, w, pen):
        q = self.q
        pen_i = self._to_internal(pen)
        W = self._leaf_sum(w)
        wX = self.Xtail * w[:, None]
        s = self.Ct @ W
        T = self.Ct @ self._leaf_sum(wX)
        Htt = self.Xtail.T @ wX
        Htt[np.diag_indices(q)] += pen_i[:q]
        val = np.empty(self.row.shape[0])
        val[self.tail_flat] = Htt[self.tail_rows, self.tail_cols]
        val[self.tail_entry] = T[self.tail_owner, self.tail_col]
        val[self.anc_entry] = self.anc_psi * s[self.anc_owner]
        val[self.diag_entry[q:]] = self.C2t @ W + pen_i[q:]
        base = val.copy()
        scale = max(float(np.max(np.abs(val[self.diag_entry]))), 1.0)
        jitter = 0.0
        for _ in range(8):
            if jitter:
                val = base.copy()
                val[self.diag_entry] += jitter
            if kernels.path_cholesky(self.ptr, self.row, val) < 0:
                return val
            jitter = scale * 1e-12 if jitter == 0 else jitter * 100
        raise np.linalg.LinAlgError("Hessian is not positive definite")

    def _solve_internal(self, val, B, forward_only=False):
        B = np.ascontiguousarray(B, dtype=np.float64)
        kernels.path_solve(self.ptr, self.row, val, B, forward_only)
        return B

    def solve(self, val, b):
        b = np.asarray(b, dtype=np.float64)
        one = b.ndim == 1
        Bi = np.atleast_2d(b.T)[:, self.perm] if not one else b[self.perm][None, :]
        Xi = self._solve_internal(val, Bi)
        out = np.empty_like(Xi)
        out[:, self.perm] = Xi
        return out[0] if one else out.T

    def _leaf_rhs(self):
        B = np.zeros((self.n_leaves, self.n_params))
        B[:, self.q:] = self.C_dense
        return B

    def leverage_q(self, val):
        q = self.q
        Y = self._solve_internal(val, self._leaf_rhs(), forward_only=True)
        U = np.zeros((q, q))
        U[self.tail_rows, self.tail_cols] = val[self.tail_flat]
        yt = linalg.solve_triangular(U, self.Xtail.T, lower=False, check_finite=False).T
        yt += Y[self.leaf, :q]
        stump_part = np.einsum("ij,ij->i", Y[:, q:], Y[:, q:])
        return stump_part[self.leaf] + np.einsum("ij,ij->i", yt, yt)

    def directions(self, val):
        q = self.q
        Yl = self._solve_internal(val, self._leaf_rhs())
        E = np.zeros((q, self.n_params))
        E[np.arange(q), np.arange(q)] = 1.0
        Yt = self._solve_internal(val, E)
        Di = Yl[self.leaf].T + Yt.T @ self.Xtail.T
        out = np.empty_like(Di)
        out[self.perm] = Di
        return out


class _NewtonProblem:
    def __init__(self, design, y, family, delta=None):
        self.design = design
        self.y = y
        self.family = family
        self.delta = delta

    def derivatives(self, eta):
        """First and second derivative of each row's loss in its linear predictor."""
        y = self.y
        if self.family == "logistic-l2":
            p = expit(eta)
            return p - y, p * (1 - p)
        r = y - eta
        d = self.delta
        return -np.clip(r, -d, d), (np.abs(r) <= d).astype(float)

    def objective(self, theta, pen, eta=None):
        eta = self.design.eta(theta) if eta is None else eta
        if self.family == "logistic-l2":
            loss = _log_loss(self.y, eta)
        else:
            loss = _huber(self.y - eta, self.delta)
        return loss.sum() + 0.5 * np.dot(pen * theta, theta), eta

    def solve(self, theta, pen, max_iter, tol, lam):
        design = self.design
        obj, eta = self.objective(theta, pen)
        for it in range(max_iter + 1):
            g, w = self.derivatives(eta)
            grad = design.rmatvec(g) + pen * theta
            gnorm = float(np.linalg.norm(grad))
            if gnorm <= tol:
                return theta, eta, g, w
            if it == max_iter:
                break
            step = design.solve(design.factor(w, pen), grad)
            slope = float(grad @ step)
            t = 1.0
            while True:
                cand = theta - t * step
                new_obj, new_eta = self.objective(cand, pen)
                if new_obj <= obj - 1e-4 * t * slope or t < 1e-10:
                    break
                t *= 0.5
            if new_obj >= obj:
                # stalled at machine precision; accept a gradient that is small on its own scale
                if gnorm <= 1e3 * tol:
                    return theta, eta, g, w
                break
            theta, obj, eta = cand, new_obj, new_eta
        raise ConvergenceError(
            f"{self.family} solver did not converge at lambda={lam:g} (gradient norm {gnorm:.3g})",
            lam=lam, grad_norm=gnorm,
        )


def _psd_factor(H):
    jitter = 0.0
    scale = max(float(np.max(np.abs(np.diag(H)))), 1.0) if H.size else 1.0
    for _ in range(8):
        try:
            return linalg.cho_factor(H + jitter * np.eye(H.shape[0]), lower=True, check_finite=False)
        except linalg.LinAlgError:
            jitter = scale * 1e-12 if jitter == 0 else jitter * 100
    raise np.linalg.LinAlgError("Hessian is not positive definite")


def _fit_squared_structured(design, D, y, grid):
    """Ridge through the path factorisation; exact because the loss is quadratic."""
    m1 = design.n_params
    w = np.ones_like(y)
    Xty = design.rmatvec(y)
    losses = []
    best = None
    for lam in grid:
        pen = np.full(m1, float(lam))
        pen[0] = 0.0
        factor = design.factor(w, pen)
        theta = design.solve(factor, Xty)
        resid = y - design.eta(theta)
        denom = 1.0 - design.leverage_q(factor)
        bad = denom <= _LEVERAGE_EPS
        safe = np.where(bad, 1.0, denom)
        loo_resid = resid / safe
        for i in np.flatnonzero(bad):
            th = _exact_refit_theta(D, y, lam, i, _squared_solve)
            loo_resid[i] = y[i] - (th[0] + D[i] @ th[1:])
        loss = float(np.mean(loo_resid**2))
        losses.append((float(lam), loss))
        if best is None or loss < best[1]:
            best = (float(lam), loss, theta, factor, -resid / safe, bad)
    lam, _, theta, factor, step, bad = best
    refit = (lambda i, D=D, y=y, lam=lam: _exact_refit_theta(D, y, lam, i, _squared_solve))
    state = _LooState(theta, lambda: design.directions(factor), step, bad, refit)
    return lam, theta, np.asarray(losses), state


def _fit_newton(design, D, y, grid, family, spec, delta=None):
    prob = _NewtonProblem(design, y, family, delta)
    m1 = design.n_params
    theta = np.zeros(m1)
    if family == "logistic-l2":
        ybar = float(np.clip(y.mean(), PROB_CLAMP, 1 - PROB_CLAMP))
        theta[0] = np.log(ybar / (1 - ybar))
    else:
        theta[0] = float(np.median(y))
    order = np.argsort(-np.asarray(grid), kind="stable")
    losses = {}
    best = None
    for idx in order:
        lam = float(grid[idx])
        pen = np.full(m1, lam)
        pen[0] = 0.0
        theta, eta, g, w = prob.solve(theta.copy(), pen, spec.max_iter, spec.tol, lam)
        factor = design.factor(w, pen)
        q = design.leverage_q(factor)
        denom = 1.0 - w * q
        bad = denom <= _LEVERAGE_EPS
        safe = np.where(bad, 1.0, denom)
        eta_loo = eta + g * q / safe
        if family == "logistic-l2":
            loss = float(np.mean(_clamped_log_loss(y, expit(eta_loo))))
        else:
            loss = float(np.mean(_huber(y - eta_loo, delta)))
        losses[idx] = (lam, loss)
        if best is None or loss < best[1]:
            best = (lam, loss, theta.copy(), factor, g / safe, bad, pen)
    lam, _, theta, factor, step, bad, pen = best
    direction = (lambda: design.directions(factor))

    def refit(i, D=D, y=y, pen=pen, theta0=theta):
        keep = np.ones(D.shape[0], dtype=bool)
        keep[i] = False
        if not keep.any():
            return np.zeros(D.shape[1] + 1)
        sub = _NewtonProblem(_DenseDesign(D[keep]), y[keep], family, delta)
        return sub.solve(theta0.copy(), pen, spec.max_iter, spec.tol, lam)[0]

    state = _LooState(theta, direction, step, bad, refit)
    path = np.asarray([losses[i] for i in range(len(grid))])
    return lam, theta, path, state


# ---------------------------------------------------------------- public API


def _prepare(Z, y, standardize):
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if Z.ndim != 2 or Z.shape[0] != y.shape[0]:
        raise ConfigError(f"design shape {Z.shape} does not match {y.shape[0]} responses")
    if Z.shape[0] < 1:
        raise ConfigError("need at least one row")
    D, centers, scales = _standardise(Z, standardize)
    return Z, y, D, centers, scales


def _robust_delta(D, y, grid):
    lam, theta, _, _ = _fit_squared(D, y, grid)
    resid = y - (theta[0] + D @ theta[1:])
    scale = _MAD_TO_SD * np.median(np.abs(resid - np.median(resid)))
    if scale <= 0:
        scale = resid.std()
    return HUBER_CONSTANT * scale if scale > 0 else 1.0


def _design(Z, D, structured):
    if structured and Z.tree is not None and Z.leaf_of_row is not None and Z.n_columns:
        return _TreeDesign(Z, D)
    return _DenseDesign(D)


def fit_regularized(Z, y, spec: GlmSpec | None = None, standardize=None, structured: bool = True) -> GlmFit:
    """Fit ``spec.family`` on design ``Z`` at the LOO-selected penalty.

    ``Z`` is a matrix or a :class:`~mdiplus.stumps.TransformedMatrix`.
    ``standardize`` is an optional boolean mask of columns to centre and
    scale to unit standard deviation before penalisation (coefficients are
    reported on the original scale); for a transformed matrix it defaults
    to its raw columns. With ``structured`` the logistic and Huber solvers
    factor the Hessian along the tree's paths instead of densely.
    """
    spec = spec or GlmSpec()
    tm = Z if isinstance(Z, TransformedMatrix) else None
    if tm is not None:
        Z = tm.values
        if standardize is None:
            standardize = tm.is_raw
    Z, y, D, centers, scales = _prepare(Z, y, standardize)
    n = Z.shape[0]
    grid = spec.grid(n)
    delta = None
    if spec.family == "ridge" and tm is not None and structured and tm.tree is not None and tm.n_columns:
        lam, theta, path, state = _fit_squared_structured(_TreeDesign(tm, D), D, y, grid)
    elif spec.family in ("ols", "ridge"):
        lam, theta, path, state = _fit_squared(D, y, grid)
    elif spec.family == "logistic-l2":
        if np.any((y != 0) & (y != 1)):
            raise ConfigError("logistic-l2 needs a 0/1 response")
        design = _design(tm, D, structured) if tm is not None else _DenseDesign(D)
        lam, theta, path, state = _fit_newton(design, D, y, grid, spec.family, spec)
    else:
        delta = spec.huber_delta if spec.huber_delta is not None else _robust_delta(D, y, grid)
        design = _design(tm, D, structured) if tm is not None else _DenseDesign(D)
        lam, theta, path, state = _fit_newton(design, D, y, grid, spec.family, spec, delta)
    alpha, beta = _to_original(theta, centers, scales)
    return GlmFit(beta, float(alpha), float(lam), spec.link, spec.family, centers, scales, n,
                  delta, path, state)


def fit_ols(Z, y, standardize=None) -> GlmFit:
    """Least squares with intercept; minimum-norm solution if rank deficient."""
    return fit_regularized(Z, y, GlmSpec("ols"), standardize)


def _require_loo(fit):
    if fit._loo is None:
        raise ConfigError("this fit carries no leave-one-out state")
    return fit._loo


def loo_coefficient_matrix(fit: GlmFit):
    """LOO coefficients for every fitting row: ``(betas (n, m), alphas (n,))``.

    Rows whose leverage is numerically one are refitted exactly.
    """
    st = _require_loo(fit)
    n = fit.n_rows
    if n == 1:
        return np.zeros((1, fit.n_columns)), np.zeros(1)
    thetas = st.theta[None, :] + (st.direction * st.step).T
    for i in np.flatnonzero(st.degenerate):
        thetas[i] = st.refit(i)
    alphas, betas = _to_original(thetas, fit.column_centers, fit.column_scales)
    return betas, alphas


def loo_coefficients(fit: GlmFit, i: int, strict: bool = False):
    """Coefficients ``(beta, alpha)`` fitted without row ``i``.

    Exact for squared loss, one Newton step otherwise. With ``strict`` a
    degenerate leverage raises :class:`DegenerateLeverageError` instead of
    falling back to an exact refit.
    """
    st = _require_loo(fit)
    if not 0 <= i < fit.n_rows:
        raise IndexError(f"row {i} out of range for a fit on {fit.n_rows} rows")
    if fit.n_rows == 1:
        return np.zeros(fit.n_columns), 0.0
    if st.degenerate[i]:
        if strict:
            raise DegenerateLeverageError(i)
        theta = st.refit(i)
    else:
        theta = st.theta + st.direction[:, i] * st.step[i]
    alpha, beta = _to_original(theta, fit.column_centers, fit.column_scales)
    return beta, float(alpha)


def inverse_link(eta, link: str):
    if link == "logit":
        return np.clip(expit(eta), PROB_CLAMP, 1 - PROB_CLAMP)
    return eta


def predict_glm(fit: GlmFit, Z) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[1] != fit.n_columns:
        raise ConfigError(f"design has {Z.shape[1]} columns, fit expects {fit.n_columns}")
    return inverse_link(Z @ fit.beta + fit.alpha, fit.link)


def penalized_objective(fit: GlmFit, Z, y, beta=None, alpha=None) -> float:
    """Objective value of ``(beta, alpha)`` (default: the fit's) in standardised units."""
    beta = fit.beta if beta is None else np.asarray(beta)
    alpha = fit.alpha if alpha is None else alpha
    eta = np.asarray(Z) @ beta + alpha
    y = np.asarray(y, dtype=float)
    b_std = beta * fit.column_scales
    pen = 0.5 * fit.lam * float(b_std @ b_std)
    if fit.family == "logistic-l2":
        return float(_log_loss(y, eta).sum()) + pen
    if fit.family == "huber-ridge":
        return float(_huber(y - eta, fit.huber_delta).sum()) + pen
    return 0.5 * float(((y - eta) ** 2).sum()) + pen


def gradient_norm(fit: GlmFit, Z, y) -> float:
    """Norm of the penalised gradient in the standardised parameterisation."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    D = (Z - fit.column_centers) / fit.column_scales
    X = np.hstack([np.ones((Z.shape[0], 1)), D])
    theta = np.concatenate([[fit.alpha + fit.beta @ fit.column_centers], fit.beta * fit.column_scales])
    eta = X @ theta
    if fit.family == "logistic-l2":
        g = expit(eta) - y
    elif fit.family == "huber-ridge":
        g = -np.clip(y - eta, -fit.huber_delta, fit.huber_delta)
    else:
        g = eta - y
    pen = np.full(theta.shape, fit.lam)
    pen[0] = 0.0
    return float(np.linalg.norm(X.T @ g + pen * theta))
