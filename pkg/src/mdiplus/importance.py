"""Forest feature importances: MDI, its R^2 form, MDI-oob, MDA, MDI+ and RF+.

For a tree with splits S, classical MDI of feature k is

    MDI_k = sum over splits s on k of  N(t_s) / n * delta(s),

which equals the unnormalised R^2, ``mean((y - ybar)^2) - mean((y - yhat_k)^2)``,
of the partial predictions ``yhat_k`` from an OLS fit of the in-bag response
on the stump design with every block except k set to its mean. MDI+
generalises that last statement: any GLM, raw-feature augmentation, LOO
coefficients and any similarity metric.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from mdiplus.data import Dataset, SeededRng, normalize_task
from mdiplus.exceptions import ConfigError, ConvergenceError, DataError
from mdiplus.forest import Forest, Tree
from mdiplus.glm import (
    GlmFit, GlmSpec, fit_ols, fit_regularized, inverse_link, loo_coefficient_matrix, predict_glm,
)
from mdiplus.metrics import SimilarityMetric, rank_order, ranks, unnormalized_r2
from mdiplus.stumps import TransformedMatrix, transform

REPORT_SCHEMA_VERSION = 1
SAMPLES = ("full", "inbag")


def _map_ordered(fn, items, threads=1):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _json_float(v):
    v = float(v)
    if np.isnan(v):
        return None
    if np.isinf(v):
        return "-inf" if v < 0 else "inf"
    return v


def _csv_float(v):
    v = float(v)
    if np.isinf(v):
        return "-inf" if v < 0 else "inf"
    if np.isnan(v):
        return "nan"
    return f"{v:.10g}"


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    """Per-feature scores of one method.

    ``per_tree`` (trees x features) holds NaN where a tree does not
    contribute to a feature; ``scores`` is its column mean over the other
    trees, ``-inf`` where every tree is NaN. ``n_trees_contributing`` counts
    trees that split the feature and entered the mean.
    """

    method: str
    scores: np.ndarray
    feature_names: tuple
    per_tree: np.ndarray | None = None
    n_trees_contributing: np.ndarray | None = None
    config: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.scores.shape[0]

    @property
    def ranking(self) -> np.ndarray:
        """Feature indices from most to least important."""
        return rank_order(self.scores)

    @property
    def ranks(self) -> np.ndarray:
        return ranks(self.scores)

    def to_dict(self) -> dict:
        contributing = self.n_trees_contributing
        rk = self.ranks
        feats = []
        for k in range(self.p):
            feats.append({
                "feature": k,
                "name": self.feature_names[k],
                "score": _json_float(self.scores[k]),
                "rank": int(rk[k]),
                "n_trees_contributing": None if contributing is None else int(contributing[k]),
            })
        out = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "kind": "importance",
            "method": self.method,
            "config": self.config,
            "features": feats,
        }
        if self.per_tree is not None:
            out["per_tree"] = [[_json_float(v) for v in row] for row in self.per_tree]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def to_csv(self) -> str:
        lines = ["feature,name,score,rank,n_trees_contributing"]
        contributing = self.n_trees_contributing
        rk = self.ranks
        for k in range(self.p):
            nt = "" if contributing is None else str(int(contributing[k]))
            name = str(self.feature_names[k])
            if any(c in name for c in ',"\n'):
                name = '"' + name.replace('"', '""') + '"'
            lines.append(f"{k},{name},{_csv_float(self.scores[k])},{rk[k]},{nt}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ImportanceReport":
        if d.get("schema_version") != REPORT_SCHEMA_VERSION or d.get("kind") != "importance":
            raise ConfigError("not an importance report document")

        def num(v):
            if v is None:
                return np.nan
            if isinstance(v, str):
                return float(v)
            return float(v)

        feats = sorted(d["features"], key=lambda f: f["feature"])
        scores = np.array([num(f["score"]) for f in feats])
        names = tuple(f["name"] for f in feats)
        nt = [f.get("n_trees_contributing") for f in feats]
        contributing = None if any(v is None for v in nt) else np.array(nt, dtype=np.intp)
        per_tree = None
        if d.get("per_tree") is not None:
            per_tree = np.array([[num(v) for v in row] for row in d["per_tree"]], dtype=float)
        return cls(d["method"], scores, names, per_tree, contributing, d.get("config", {}))


def aggregate(per_tree, method, names, config=None, split_mask=None) -> ImportanceReport:
    """Column means over non-NaN trees; -inf if every tree is NaN.

    ``n_trees_contributing`` counts non-NaN trees that also split the feature
    when ``split_mask`` (trees x features) is given.
    """
    per_tree = np.asarray(per_tree, dtype=float)
    entered = ~np.isnan(per_tree)
    n_entered = entered.sum(axis=0)
    total = np.where(entered, per_tree, 0.0).sum(axis=0)
    scores = np.full(per_tree.shape[1], -np.inf)
    ok = n_entered > 0
    scores[ok] = total[ok] / n_entered[ok]
    contributing = n_entered if split_mask is None else np.sum(entered & split_mask, axis=0)
    return ImportanceReport(method, scores, tuple(names), per_tree, contributing, dict(config or {}))


def split_mask(forest: Forest) -> np.ndarray:
    """Boolean (trees x features): does tree t split on feature k."""
    return np.array([t.split_counts() > 0 for t in forest.trees]).reshape(len(forest), forest.n_features)


# ------------------------------------------------------------ classical MDI


def tree_mdi(tree: Tree) -> np.ndarray:
    """Per-feature MDI of one tree, in response-variance units."""
    s = tree.split_order
    if s.size == 0:
        return np.zeros(tree.n_features)
    weight = tree.n_node[s] / tree.n_node[0]
    return np.bincount(tree.feature[s], weights=weight * tree.impurity_decreases(),
                       minlength=tree.n_features)


def mdi_classical(forest: Forest, data: Dataset | None = None) -> ImportanceReport:
    """Mean over all trees of :func:`tree_mdi`; trees that never split k contribute 0."""
    per_tree = np.array([tree_mdi(t) for t in forest.trees])
    counts = np.sum([t.split_counts() > 0 for t in forest.trees], axis=0)
    names = forest.column_names or tuple(f"x{j}" for j in range(forest.n_features))
    return ImportanceReport("mdi", per_tree.mean(axis=0), tuple(names), per_tree, counts,
                            {"normalization": "raw"})


def mdi_normalized(forest: Forest, data: Dataset) -> ImportanceReport:
    """Classical MDI divided per tree by the in-bag response variance (normalised R^2).

    Trees whose in-bag response is constant contribute 0.
    """
    _check_data(forest, data)
    rows = []
    for tree, boot in zip(forest.trees, forest.bootstraps):
        v = float(np.var(data.y[boot.in_bag]))
        rows.append(tree_mdi(tree) / v if v > 0 else np.zeros(data.p))
    per_tree = np.array(rows)
    counts = np.sum([t.split_counts() > 0 for t in forest.trees], axis=0)
    return ImportanceReport("mdi-normalized", per_tree.mean(axis=0), data.column_names, per_tree, counts,
                            {"normalization": "in-bag variance"})


# ------------------------------------------------------ partial predictions


def _block_indicator(tm: TransformedMatrix) -> np.ndarray:
    p = len(tm.blocks)
    P = np.zeros((tm.n_columns, p))
    P[np.arange(tm.n_columns), tm.column_feature] = 1.0
    return P


def partial_predictions(tm: TransformedMatrix, fit: GlmFit, loo: bool = False, means=None) -> np.ndarray:
    """Partial model predictions for every feature, shape (rows, p).

    Column k uses the rows' own values in block k and ``means`` (default: the
    column means of ``tm``) elsewhere. With ``loo`` row i uses the
    coefficients fitted without it together with the full-data intercept.
    A feature with an empty block gets the constant model.
    """
    Z = tm.values
    means = Z.mean(axis=0) if means is None else np.asarray(means, dtype=float)
    if loo:
        if fit.n_rows != Z.shape[0]:
            raise ConfigError("LOO partial predictions need the fitting rows")
        B, _ = loo_coefficient_matrix(fit)
        base = fit.alpha + B @ means
        contrib = (Z - means) * B
    else:
        base = np.full(Z.shape[0], fit.alpha + fit.beta @ means)
        contrib = (Z - means) * fit.beta
    eta = base[:, None] + contrib @ _block_indicator(tm)
    return inverse_link(eta, fit.link)


@dataclass(frozen=True, eq=False)
class PartialPrediction:
    feature: int
    values: np.ndarray
    mode: str


def saabas_partial(tree: Tree, fit: GlmFit, X, augment_raw: bool = False, means=None,
                   mode: str | None = None) -> list[PartialPrediction]:
    """Partial predictions of a GLM fitted on ``tree``'s stump design, one per feature.

    Under OLS on the in-bag rows they are the Saabas decomposition of the
    tree: ``sum_k (yhat_k - ybar) + ybar`` equals the tree's fitted values.
    """
    tm = transform(X, tree, augment_raw=augment_raw)
    if tm.n_columns != fit.n_columns:
        raise ConfigError(f"fit has {fit.n_columns} columns, the transformed matrix has {tm.n_columns}")
    preds = partial_predictions(tm, fit, loo=False, means=means)
    mode = mode or ("in-bag-ols" if fit.family == "ols" else "glm")
    return [PartialPrediction(k, preds[:, k], mode) for k in range(tree.n_features)]


# ------------------------------------------------------------- MDI+ engine


@dataclass(frozen=True)
class MdiPlusConfig:
    """One MDI+ model: design (raw augmentation), GLM, metric and evaluation.

    ``sample`` picks the rows the GLM is fit and scored on: the distinct
    original rows ("full") or the tree's bootstrap sample with multiplicity
    ("inbag"). ``empty_score`` is the per-tree score of a feature the tree
    never splits on; ``None`` leaves the tree out of that feature's average.
    """

    glm: GlmSpec = field(default_factory=lambda: GlmSpec("ridge"))
    metric: SimilarityMetric = field(default_factory=lambda: SimilarityMetric("r2"))
    augment_raw: bool = True
    loo: bool = True
    sample: str = "full"
    empty_score: float | None = None

    def __post_init__(self):
        if self.sample not in SAMPLES:
            raise ConfigError(f"sample must be one of {SAMPLES}, got {self.sample!r}")
        self.metric.check_link(self.glm.link)

    @classmethod
    def default_for(cls, task: str) -> "MdiPlusConfig":
        if normalize_task(task) == "binary-classification":
            return cls(GlmSpec("logistic-l2"), SimilarityMetric("neg-log-loss"))
        return cls()

    @classmethod
    def mdi_reduction(cls) -> "MdiPlusConfig":
        """The configuration under which MDI+ reproduces classical MDI."""
        return cls(GlmSpec("ols"), SimilarityMetric("r2-unnormalized"), augment_raw=False, loo=False,
                   sample="inbag", empty_score=0.0)

    @classmethod
    def from_options(cls, glm: str = "ridge", metric: str | None = None, augment_raw: bool = True,
                     loo: bool = True, lambda_grid=None, huber_delta: float | None = None) -> "MdiPlusConfig":
        """Build a config from flat options.

        ``metric=None`` picks the GLM's natural metric. Without LOO the
        model is scored on the in-bag sample; an unnormalised-R^2 metric
        scores unsplit features 0 per tree, its exact value for a
        mean-only partial prediction.
        """
        spec = GlmSpec(glm, lambda_grid=lambda_grid, huber_delta=huber_delta)
        if metric is None:
            metric = {"logistic-l2": "neg-log-loss", "huber-ridge": "neg-huber"}.get(spec.family, "r2")
        m = SimilarityMetric(metric)
        return cls(spec, m, augment_raw=augment_raw, loo=loo, sample="full" if loo else "inbag",
                   empty_score=0.0 if m.kind == "r2-unnormalized" else None)

    def validate(self, task: str):
        if self.glm.link == "logit" and normalize_task(task) != "binary-classification":
            raise ConfigError("a logit-link GLM needs a binary-classification task")

    def to_dict(self) -> dict:
        return {
            "glm": self.glm.family,
            "lambda_grid": None if self.glm.lambda_grid is None else list(self.glm.lambda_grid),
            "huber_delta": self.glm.huber_delta,
            "metric": self.metric.kind,
            "metric_huber_delta": self.metric.huber_delta,
            "augment_raw": self.augment_raw,
            "loo": self.loo,
            "sample": self.sample,
            "empty_score": self.empty_score,
        }


def _fit_glm(tm, y, spec):
    if spec.family == "ols":
        return fit_ols(tm.values, y, standardize=tm.is_raw)
    return fit_regularized(tm, y, spec)


def _tree_fit(tree, boot, X, y, cfg, t):
    rows = np.arange(X.shape[0]) if cfg.sample == "full" else boot.in_bag
    tm = transform(X[rows], tree, augment_raw=cfg.augment_raw)
    yr = y[rows]
    try:
        fit = _fit_glm(tm, yr, cfg.glm)
    except ConvergenceError as exc:
        raise ConvergenceError(f"tree {t}: {exc}", lam=exc.lam, grad_norm=exc.grad_norm, tree=t) from exc
    return tm, yr, fit


def _tree_scores(tm, yr, fit, cfg):
    p = len(tm.blocks)
    preds = partial_predictions(tm, fit, loo=cfg.loo)
    empty = np.nan if cfg.empty_score is None else cfg.empty_score
    out = np.full(p, empty, dtype=float)
    for k in range(p):
        if tm.nonempty(k):
            out[k] = cfg.metric(yr, preds[:, k], fit.huber_delta)
    return out


def mdi_plus(forest: Forest, data: Dataset, config: MdiPlusConfig | None = None, threads: int = 1,
             return_model: bool = False):
    """MDI+ scores; with ``return_model`` also the per-tree GLMs as an :class:`RFPlus`."""
    config = config or MdiPlusConfig.default_for(data.task)
    config.validate(data.task)
    _check_data(forest, data)
    X, y = data.X, data.y

    def one(t):
        tm, yr, fit = _tree_fit(forest.trees[t], forest.bootstraps[t], X, y, config, t)
        scores = _tree_scores(tm, yr, fit, config)
        return scores, (fit.without_loo() if return_model else None)

    results = _map_ordered(one, range(len(forest)), threads)
    per_tree = np.array([r[0] for r in results]).reshape(len(forest), data.p)
    report = aggregate(per_tree, "mdi-plus", data.column_names, config.to_dict(), split_mask(forest))
    if return_model:
        model = RFPlus(forest, tuple(r[1] for r in results), config.augment_raw, config.glm)
        return report, model
    return report


def _check_data(forest, data):
    if data.p != forest.n_features:
        raise DataError(f"data has {data.p} features, forest was grown on {forest.n_features}")
    for boot in forest.bootstraps:
        if boot.n != data.n:
            raise DataError(f"forest was grown on {boot.n} rows, data has {data.n}")


def mdi_via_r2(tree: Tree, X, y, in_bag=None) -> np.ndarray:
    """Per-feature unnormalised R^2 of in-bag OLS partial predictions.

    ``in_bag`` lists the bootstrap rows with repeats (default: every row of
    ``X`` once). Equal to :func:`tree_mdi` for variance-split trees.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rows = np.arange(X.shape[0]) if in_bag is None else np.asarray(in_bag)
    tm = transform(X[rows], tree)
    fit = fit_ols(tm.values, y[rows])
    return _tree_scores(tm, y[rows], fit, MdiPlusConfig.mdi_reduction())


def mdi_r2(forest: Forest, data: Dataset, threads: int = 1) -> ImportanceReport:
    _check_data(forest, data)
    per_tree = _map_ordered(
        lambda t: mdi_via_r2(forest.trees[t], data.X, data.y, forest.bootstraps[t].in_bag),
        range(len(forest)), threads)
    counts = np.sum([t.split_counts() > 0 for t in forest.trees], axis=0)
    per_tree = np.array(per_tree).reshape(len(forest), data.p)
    return ImportanceReport("mdi-r2", per_tree.mean(axis=0), data.column_names, per_tree, counts,
                            {"glm": "ols", "metric": "r2-unnormalized", "sample": "inbag"})


def mdi_oob(forest: Forest, data: Dataset, threads: int = 1) -> ImportanceReport:
    """In-bag OLS partial predictions scored by unnormalised R^2 on out-of-bag rows.

    Trees without out-of-bag rows are skipped and listed under
    ``config["skipped_trees"]``.
    """
    _check_data(forest, data)
    X, y = data.X, data.y
    reduction = MdiPlusConfig.mdi_reduction()

    def one(t):
        tree, boot = forest.trees[t], forest.bootstraps[t]
        if boot.oob.size == 0:
            return None
        tm_fit = transform(X[boot.in_bag], tree)
        fit = fit_ols(tm_fit.values, y[boot.in_bag])
        tm_oob = transform(X[boot.oob], tree)
        return _tree_scores(tm_oob, y[boot.oob], fit, reduction)

    rows = _map_ordered(one, range(len(forest)), threads)
    skipped = [t for t, r in enumerate(rows) if r is None]
    per_tree = np.array([np.full(data.p, np.nan) if r is None else r for r in rows]).reshape(len(forest), data.p)
    report = aggregate(per_tree, "mdi-oob", data.column_names, split_mask=split_mask(forest), config=
                       {"glm": "ols", "metric": "r2-unnormalized", "sample": "oob", "skipped_trees": skipped})
    return report


# -------------------------------------------------------------------- MDA


def _loss(task, y, pred):
    if task == "binary-classification":
        return float(np.mean((pred > 0.5) != (y > 0.5)))
    return float(np.mean((y - pred) ** 2))


def mda(forest: Forest, data: Dataset, rng: SeededRng | None = None, n_repeats: int = 1,
        permutation=None, threads: int = 1) -> ImportanceReport:
    """Out-of-bag permutation importance.

    Each (tree, feature, repeat) permutes the feature's out-of-bag values
    with its own stream ``rng.child(tree, feature, repeat)``. ``permutation``
    may override the draw: a callable ``(n_oob, generator) -> index array``.
    Loss is MSE for regression and misclassification rate (threshold 0.5)
    for classification.
    """
    _check_data(forest, data)
    if n_repeats < 1:
        raise ConfigError("n_repeats must be >= 1")
    rng = rng or SeededRng(forest.seed)
    X, y = data.X, data.y

    def one(t):
        tree, boot = forest.trees[t], forest.bootstraps[t]
        out = np.full(data.p, np.nan)
        oob = boot.oob
        if oob.size == 0:
            return out
        Xo = X[oob]
        yo = y[oob]
        base = _loss(data.task, yo, tree.predict(Xo))
        used = tree.split_counts() > 0
        for k in range(data.p):
            if not used[k]:
                out[k] = 0.0
                continue
            total = 0.0
            for r in range(n_repeats):
                gen = rng.child(t, k, r).generator()
                perm = gen.permutation(oob.size) if permutation is None else np.asarray(permutation(oob.size, gen))
                Xp = Xo.copy()
                Xp[:, k] = Xo[perm, k]
                total += _loss(data.task, yo, tree.predict(Xp)) - base
            out[k] = total / n_repeats
        return out

    per_tree = np.array(_map_ordered(one, range(len(forest)), threads)).reshape(len(forest), data.p)
    report = aggregate(per_tree, "mda", data.column_names, split_mask=split_mask(forest), config=
                       {"loss": "misclassification" if data.task == "binary-classification" else "mse",
                        "n_repeats": n_repeats, "seed": rng.seed, "stream_id": rng.stream_id})
    return report


# -------------------------------------------------------------------- RF+


@dataclass(frozen=True, eq=False)
class RFPlus:
    """Per-tree GLMs on the (optionally raw-augmented) stump designs."""

    forest: Forest
    fits: tuple
    augment_raw: bool
    spec: GlmSpec

    def predict(self, X) -> np.ndarray:
        return rf_plus_predict(self, X)


def fit_rf_plus(forest: Forest, data: Dataset, spec: GlmSpec | None = None, augment_raw: bool = True,
                sample: str = "full", threads: int = 1) -> RFPlus:
    if spec is None:
        spec = MdiPlusConfig.default_for(data.task).glm
    if spec.link == "logit" and data.task != "binary-classification":
        raise ConfigError("a logit-link GLM needs a binary-classification task")
    _check_data(forest, data)
    metric = SimilarityMetric("neg-log-loss" if spec.link == "logit" else "r2")
    cfg = MdiPlusConfig(spec, metric, augment_raw=augment_raw, loo=False, sample=sample)

    def one(t):
        return _tree_fit(forest.trees[t], forest.bootstraps[t], data.X, data.y, cfg, t)[2].without_loo()

    fits = _map_ordered(one, range(len(forest)), threads)
    return RFPlus(forest, tuple(fits), augment_raw, spec)


def rf_plus_predict(model: RFPlus, X) -> np.ndarray:
    """Mean over trees of each GLM's prediction (probabilities for a logit link)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.forest.n_features:
        raise DataError(f"query matrix must have {model.forest.n_features} columns, got shape {X.shape}")
    total = np.zeros(X.shape[0])
    for tree, fit in zip(model.forest.trees, model.fits):
        tm = transform(X, tree, augment_raw=model.augment_raw)
        total += predict_glm(fit, tm.values)
    return total / len(model.fits)


METHODS = ("mdi", "mdi-r2", "mdi-oob", "mda", "mdi-plus")


def compute(method: str, forest: Forest, data: Dataset, config: MdiPlusConfig | None = None,
            rng: SeededRng | None = None, threads: int = 1) -> ImportanceReport:
    """Dispatch on a method name from :data:`METHODS`."""
    if method == "mdi":
        return mdi_classical(forest)
    if method == "mdi-r2":
        return mdi_r2(forest, data, threads)
    if method == "mdi-oob":
        return mdi_oob(forest, data, threads)
    if method == "mda":
        return mda(forest, data, rng, threads=threads)
    if method == "mdi-plus":
        return mdi_plus(forest, data, config, threads)
    raise ConfigError(f"unknown importance method {method!r}; expected one of {METHODS}")
