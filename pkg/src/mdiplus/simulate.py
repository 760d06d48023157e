"""Synthetic covariates and responses, and replicated importance experiments.

An experiment is a JSON-serialisable :class:`ExperimentConfig`. Every
replicate draws its data from its own random stream, fits a forest, runs
each requested importance method and records AUROC against the true signal
features, ranks of chosen features and mean ranks within feature groups.
"""
from __future__ import annotations

import copy
import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from mdiplus.data import Dataset, SeededRng, normalize_task
from mdiplus.exceptions import ConfigError, DataError, ExperimentError, MdiPlusError
from mdiplus.forest import ForestParams, fit_forest
from mdiplus.importance import METHODS, MdiPlusConfig, compute
from mdiplus.metrics import auroc, ranks

CONFIG_SCHEMA_VERSION = 1
RESPONSE_KINDS = ("linear", "lss", "poly-interaction", "linear-plus-lss", "single", "single-affine")
COVARIATE_SOURCES = ("csv", "correlated-gaussian", "entropy-mix")
ENTROPY_CATEGORIES = (4, 10, 20)


# ------------------------------------------------------------------ responses


@dataclass(frozen=True)
class ResponseSpec:
    """Mean-response function.

    ``single`` is ``f = X_1`` and ``single-affine`` is ``f = (1 + X_1) / 3``,
    a probability used directly for binary responses. ``permute=False`` keeps
    the signal on the leading columns instead of drawing them at random.
    """

    kind: str = "linear"
    s_linear: int = 5
    m_interactions: int = 3
    logistic_link: bool = False
    permute: bool = True

    def __post_init__(self):
        if self.kind not in RESPONSE_KINDS:
            raise ConfigError(f"unknown response kind {self.kind!r}; expected one of {RESPONSE_KINDS}")
        if self.s_linear < 1 or self.m_interactions < 1:
            raise ConfigError("s_linear and m_interactions must be >= 1")

    @property
    def n_signal(self) -> int:
        if self.kind == "linear":
            return self.s_linear
        if self.kind in ("single", "single-affine"):
            return 1
        return 2 * self.m_interactions


def signal_features(p: int, spec: ResponseSpec, rng: SeededRng | None = None) -> np.ndarray:
    """Column indices playing the roles of X_1, X_2, ... in the response formula."""
    s = spec.n_signal
    if p < s:
        raise DataError(f"response {spec.kind!r} needs {s} features, data has {p}")
    if rng is None or not spec.permute:
        return np.arange(s)
    return rng.generator().permutation(p)[:s]


def _lss(Z, m):
    return sum((Z[:, 2 * j] > 0) * (Z[:, 2 * j + 1] > 0) for j in range(m)).astype(float)


def gen_response(X, spec: ResponseSpec, rng: SeededRng | None = None, signal=None):
    """Mean response and signal mask.

    ``signal`` fixes the signal columns (as returned by :func:`signal_features`);
    otherwise they are drawn from ``rng``. With ``logistic_link`` the mean is
    passed through the inverse logit.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("X must be a 2-d matrix")
    idx = signal_features(X.shape[1], spec, rng) if signal is None else np.asarray(signal, dtype=np.intp)
    if idx.size != spec.n_signal:
        raise ConfigError(f"response {spec.kind!r} needs {spec.n_signal} signal columns, got {idx.size}")
    Z = X[:, idx]
    m = spec.m_interactions
    odd = Z[:, 0:2 * m:2] if spec.kind != "linear" else None
    if spec.kind == "linear":
        f = Z.sum(axis=1)
    elif spec.kind == "lss":
        f = _lss(Z, m)
    elif spec.kind == "poly-interaction":
        f = odd.sum(axis=1) + (Z[:, 0:2 * m:2] * Z[:, 1:2 * m:2]).sum(axis=1)
    elif spec.kind == "linear-plus-lss":
        f = odd.sum(axis=1) + _lss(Z, m)
    elif spec.kind == "single":
        f = Z[:, 0].copy()
    else:
        f = (1.0 + Z[:, 0]) / 3.0
    if spec.logistic_link:
        f = expit(f)
    mask = np.zeros(X.shape[1], dtype=bool)
    mask[idx] = True
    return f, mask


# ---------------------------------------------------------------------- noise


@dataclass(frozen=True)
class NoiseSpec:
    """``pve`` drives Gaussian noise for regression; the rest corrupt the data.

    ``outlier_q`` is a fraction in [0, 1) split equally over both tails.
    """

    pve: float | None = None
    corrupt_fraction: float = 0.0
    outlier_q: float = 0.0
    mu_corrupt: float = 10.0

    def __post_init__(self):
        if self.pve is not None and not 0 < self.pve < 1:
            raise ConfigError(f"pve must lie in (0, 1), got {self.pve}")
        if not 0 <= self.corrupt_fraction < 1:
            raise ConfigError("corrupt_fraction must lie in [0, 1)")
        if not 0 <= self.outlier_q < 1:
            raise ConfigError("outlier_q must lie in [0, 1)")


def calibrate_noise(f_values, pve: float) -> float:
    """Noise variance giving proportion of variance explained ``pve`` (empirical Var f)."""
    if not 0 < pve < 1:
        raise ConfigError(f"pve must lie in (0, 1), got {pve}")
    v = float(np.var(np.asarray(f_values, dtype=float)))
    if v <= 0:
        raise DataError("cannot calibrate noise for a constant mean response")
    return v * (1.0 - pve) / pve


def _round_count(x: float) -> int:
    # halves round to even: n=100, q=0.05 flags 2 rows per tail
    return int(round(x))


def flip_indices(n: int, fraction: float, rng: SeededRng) -> np.ndarray:
    """``round(fraction * n)`` distinct rows drawn uniformly, sorted."""
    if not 0 <= fraction < 1:
        raise ConfigError("fraction must lie in [0, 1)")
    k = _round_count(fraction * n)
    return np.sort(rng.generator().choice(n, size=k, replace=False))


def corrupt_labels(y, fraction: float, rng: SeededRng | None = None, indices=None) -> np.ndarray:
    """Copy of binary ``y`` with ``round(fraction * n)`` labels flipped."""
    y = np.array(y, dtype=float)
    if indices is None:
        if rng is None:
            raise ConfigError("corrupt_labels needs rng or indices")
        indices = flip_indices(y.size, fraction, rng)
    y[indices] = 1.0 - y[indices]
    return y


def inject_outliers(X, y, q: float, mu_corrupt: float, rng: SeededRng, signal_mask=None):
    """Corrupt responses in both tails of a random non-signal feature.

    Rows with the ``round(n q / 2)`` smallest values of the chosen feature get
    ``N(mu_corrupt, 1)`` responses, the same number with the largest values get
    ``N(-mu_corrupt, 1)``; ties are ordered by row index. Returns
    ``(y_new, feature, bottom_rows, top_rows)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.array(y, dtype=float)
    if not 0 <= q < 1:
        raise ConfigError("q must lie in [0, 1)")
    n, p = X.shape
    mask = np.zeros(p, dtype=bool) if signal_mask is None else np.asarray(signal_mask, dtype=bool)
    candidates = np.flatnonzero(~mask)
    if candidates.size == 0:
        raise DataError("inject_outliers needs at least one non-signal feature")
    gen = rng.generator()
    k = int(candidates[gen.integers(candidates.size)])
    m = _round_count(n * q / 2.0)
    order = np.lexsort((np.arange(n), X[:, k]))
    bottom, top = order[:m], order[n - m:] if m else order[:0]
    y[bottom] = gen.normal(mu_corrupt, 1.0, size=m)
    y[top] = gen.normal(-mu_corrupt, 1.0, size=m)
    return y, k, np.sort(bottom), np.sort(top)


# ----------------------------------------------------------------- covariates


def gen_correlated_gaussian(n: int, p: int = 100, rho: float = 0.5, block_size: int = 50,
                            rng: SeededRng | None = None) -> np.ndarray:
    """Rows from N(0, S): unit variances, pairwise ``rho`` among the first
    ``block_size`` columns, independence elsewhere."""
    if not 1 <= block_size <= p:
        raise ConfigError(f"block_size must lie in [1, {p}]")
    lo = -1.0 / (block_size - 1) if block_size > 1 else -math.inf
    if not lo < rho < 1:
        raise ConfigError(f"rho={rho} does not give a positive-definite covariance for block size {block_size}")
    gen = (rng or SeededRng(0)).generator()
    Z = gen.standard_normal((n, p))
    if block_size > 1 and rho != 0:
        S = np.full((block_size, block_size), rho)
        np.fill_diagonal(S, 1.0)
        L = np.linalg.cholesky(S)
        Z[:, :block_size] = Z[:, :block_size] @ L.T
    return Z


def gen_entropy_features(n: int, rng: SeededRng | None = None) -> np.ndarray:
    """Bernoulli(1/2), standard normal, and uniform categorical on 4, 10, 20 levels (coded 0..C-1)."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    gen = (rng or SeededRng(0)).generator()
    cols = [gen.integers(0, 2, size=n).astype(float), gen.standard_normal(n)]
    cols += [gen.integers(0, c, size=n).astype(float) for c in ENTROPY_CATEGORIES]
    return np.column_stack(cols)


@dataclass(frozen=True)
class CovariateSpec:
    source: str = "correlated-gaussian"
    n: int = 250
    p: int = 100
    rho: float = 0.0
    block_size: int = 50
    path: str | None = None
    drop_columns: tuple = ()

    def __post_init__(self):
        if self.source not in COVARIATE_SOURCES:
            raise ConfigError(f"unknown covariate source {self.source!r}; expected one of {COVARIATE_SOURCES}")
        if self.source == "csv" and not self.path:
            raise ConfigError("csv covariates need a path")
        object.__setattr__(self, "drop_columns", tuple(int(c) for c in self.drop_columns))

    def generate(self, rng: SeededRng) -> np.ndarray:
        if self.source == "entropy-mix":
            return gen_entropy_features(self.n, rng)
        if self.source == "correlated-gaussian":
            return gen_correlated_gaussian(self.n, self.p, self.rho, self.block_size, rng)
        X = _csv_covariates(self.path)
        if self.n and self.n < X.shape[0]:
            rows = np.sort(rng.generator().choice(X.shape[0], size=self.n, replace=False))
            X = X[rows]
        return X


def _csv_covariates(path):
    """Every column of a headed numeric CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        rows = []
        for i, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}: line {i} has {len(row)} cells, header has {len(header)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise DataError(f"{path}: line {i}: {exc}") from exc
    if len(rows) < 2:
        raise DataError(f"{path}: need at least two data rows")
    return np.asarray(rows)


# -------------------------------------------------------------------- methods


@dataclass(frozen=True)
class MethodSpec:
    """An importance method as run in an experiment.

    ``glm``/``metric``/``augment_raw``/``loo`` only apply to ``mdi-plus``.
    """

    label: str
    method: str = "mdi-plus"
    glm: str = "ridge"
    metric: str | None = None
    augment_raw: bool = True
    loo: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method == "mdi-plus":
            self.mdi_plus_config()

    def mdi_plus_config(self) -> MdiPlusConfig:
        return MdiPlusConfig.from_options(self.glm, self.metric, self.augment_raw, self.loo)

    @classmethod
    def parse(cls, obj) -> "MethodSpec":
        if isinstance(obj, str):
            return cls(obj, obj) if obj in METHODS else cls(obj)
        return cls(**obj)

    def run(self, forest, data, rng, threads=1):
        cfg = self.mdi_plus_config() if self.method == "mdi-plus" else None
        return compute(self.method, forest, data, cfg, rng, threads)


# ----------------------------------------------------------------- experiment


@dataclass
class ExperimentConfig:
    """Full description of a replicated experiment.

    ``metrics`` may contain ``"auroc"``, ``"rank:<j>"`` (1-based rank of
    column ``j``) and ``"group-ranks"`` (mean rank within each entry of
    ``groups``; the group spec ``"signal"`` means the replicate's signal
    columns, a ``[start, stop)`` pair a column range minus signal columns).
    ``sweep`` maps dotted field paths to value lists; every combination is a
    setting.
    """

    covariates: CovariateSpec = field(default_factory=CovariateSpec)
    response: ResponseSpec = field(default_factory=ResponseSpec)
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec(pve=0.1))
    task: str = "regression"
    forest_params: dict = field(default_factory=dict)
    methods: list = field(default_factory=lambda: ["mdi", "mdi-plus"])
    metrics: list = field(default_factory=lambda: ["auroc"])
    groups: dict = field(default_factory=dict)
    replicates: int = 50
    seed: int = 0
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.covariates, dict):
            self.covariates = CovariateSpec(**self.covariates)
        if isinstance(self.response, dict):
            self.response = ResponseSpec(**self.response)
        if isinstance(self.noise, dict):
            self.noise = NoiseSpec(**self.noise)
        self.task = normalize_task(self.task)
        self.methods = [m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in self.methods]
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate method labels in {labels}")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        for m in self.metrics:
            if m not in ("auroc", "group-ranks") and not m.startswith("rank:"):
                raise ConfigError(f"unknown experiment metric {m!r}")
        if self.task == "binary-classification" and self.noise.pve is not None:
            raise ConfigError("pve applies to regression only; use corrupt_fraction for classification")
        for path in self.sweep:
            _get_path(self, path)

    def forest(self) -> ForestParams:
        return ForestParams.for_task(self.task, **self.forest_params)

    def to_dict(self) -> dict:
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "covariates": asdict(self.covariates) | {"drop_columns": list(self.covariates.drop_columns)},
            "response": asdict(self.response),
            "noise": asdict(self.noise),
            "task": self.task,
            "forest_params": asdict(self.forest()),
            "methods": [asdict(m) for m in self.methods],
            "metrics": list(self.metrics),
            "groups": self.groups,
            "replicates": self.replicates,
            "seed": self.seed,
            "sweep": self.sweep,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported experiment schema_version {version!r}")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown experiment fields {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _get_path(cfg, path):
    obj = cfg
    for part in path.split("."):
        if not hasattr(obj, part):
            raise ConfigError(f"sweep path {path!r} does not name a config field")
        obj = getattr(obj, part)
    return obj


def _with_path(cfg: ExperimentConfig, path: str, value) -> ExperimentConfig:
    d = cfg.to_dict()
    d.pop("sweep")
    node = d
    parts = path.split(".")
    for part in parts[:-1]:
        node = node[part]
    node[parts[-1]] = value
    return ExperimentConfig.from_dict(d)


def settings(cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """Expand the sweep into ``(label, config)`` pairs in a fixed order."""
    if not cfg.sweep:
        return [("base", cfg)]
    keys = list(cfg.sweep)
    out = []
    for values in itertools.product(*(cfg.sweep[k] for k in keys)):
        c = cfg
        for k, v in zip(keys, values):
            c = _with_path(c, k, v)
        out.append((";".join(f"{k}={v}" for k, v in zip(keys, values)), c))
    return out


@dataclass(frozen=True)
class Replicate:
    data: Dataset
    signal: np.ndarray
    signal_mask: np.ndarray
    sigma2: float | None


def generate_replicate(cfg: ExperimentConfig, rng: SeededRng) -> Replicate:
    """Data for one replicate; each stage draws from its own child stream."""
    X = cfg.covariates.generate(rng.child(0))
    signal = signal_features(X.shape[1], cfg.response, rng.child(1))
    f, mask = gen_response(X, cfg.response, signal=signal)
    sigma2 = None
    gen = rng.child(2).generator()
    if cfg.task == "binary-classification":
        if not cfg.response.logistic_link and (f.min() < 0 or f.max() > 1):
            raise ConfigError("a binary response needs a probability mean; set logistic_link")
        y = (gen.random(f.size) < f).astype(float)
        if cfg.noise.corrupt_fraction:
            y = corrupt_labels(y, cfg.noise.corrupt_fraction, rng.child(3))
    else:
        y = f.copy()
        if cfg.noise.pve is not None:
            sigma2 = calibrate_noise(f, cfg.noise.pve)
            y = f + gen.normal(0.0, math.sqrt(sigma2), size=f.size)
        if cfg.noise.outlier_q:
            y = inject_outliers(X, y, cfg.noise.outlier_q, cfg.noise.mu_corrupt, rng.child(4), mask)[0]
    drop = cfg.covariates.drop_columns
    if drop:
        keep = np.setdiff1d(np.arange(X.shape[1]), drop)
        X, mask = X[:, keep], mask[keep]
        signal = np.array([int(np.searchsorted(keep, s)) for s in signal if s in set(keep)], dtype=np.intp)
    return Replicate(Dataset(X, y, cfg.task), signal, mask, sigma2)


def _group_members(spec, signal, p):
    if spec == "signal":
        return np.asarray(signal, dtype=np.intp)
    if isinstance(spec, (list, tuple)) and len(spec) == 2:
        lo, hi = int(spec[0]), min(int(spec[1]), p)
        return np.setdiff1d(np.arange(lo, hi), signal)
    raise ConfigError(f"bad group spec {spec!r}")


def _score_rows(cfg, rep, report):
    out = []
    r = ranks(report.scores)
    for metric in cfg.metrics:
        if metric == "auroc":
            out.append(("auroc", auroc(report.scores, rep.signal_mask)))
        elif metric == "group-ranks":
            for name, spec in cfg.groups.items():
                members = _group_members(spec, rep.signal, rep.data.p)
                out.append((f"group_rank:{name}", float(r[members].mean()) if members.size else math.nan))
        else:
            j = int(metric.split(":", 1)[1])
            if not 0 <= j < rep.data.p:
                raise ConfigError(f"metric {metric!r} names a column outside [0, {rep.data.p})")
            out.append((metric, float(r[j])))
    return out


def run_replicate(cfg: ExperimentConfig, rng: SeededRng, replicate: int):
    """``[(method label, metric name, value), ...]`` for one replicate."""
    stage = "generate"
    try:
        rep = generate_replicate(cfg, rng)
        stage = "forest"
        forest = fit_forest(rep.data, cfg.forest(), rng.child(5))
        rows = []
        for i, m in enumerate(cfg.methods):
            stage = f"method:{m.label}"
            report = m.run(forest, rep.data, rng.child(6, i))
            rows.extend((m.label, name, value) for name, value in _score_rows(cfg, rep, report))
        return rows
    except MdiPlusError as exc:
        raise ExperimentError(str(exc), replicate, stage) from exc
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise ExperimentError(f"{type(exc).__name__}: {exc}", replicate, stage) from exc


@dataclass
class ExperimentResult:
    """``rows``: (replicate, method, metric_name, value, setting) in replicate order."""

    rows: list
    config: dict

    def summary(self) -> list:
        """(setting, method, metric_name, mean, stderr, count); stderr = SD/sqrt(reps)."""
        groups = {}
        for rep, method, metric, value, setting in self.rows:
            groups.setdefault((setting, method, metric), []).append(value)
        out = []
        for (setting, method, metric), vals in groups.items():
            v = np.asarray(vals, dtype=float)
            se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
            out.append((setting, method, metric, float(v.mean()), se, int(v.size)))
        return out

    def values(self, method, metric, setting="base") -> np.ndarray:
        return np.array([v for _, m, k, v, s in self.rows if m == method and k == metric and s == setting])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("replicate,method,metric_name,value,setting\n")
        for rep, method, metric, value, setting in self.rows:
            buf.write(f"{rep},{method},{metric},{_fmt(value, 17)},{_csv_quote(setting)}\n")
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        buf.write("setting,method,metric_name,mean,stderr,replicates\n")
        for setting, method, metric, mean, se, count in self.summary():
            buf.write(f"{_csv_quote(setting)},{method},{metric},{_fmt(mean, 10)},{_fmt(se, 10)},{count}\n")
        return buf.getvalue()


def _fmt(v, digits):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.{digits}g}"


def _csv_quote(s):
    s = str(s)
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def run_experiment(cfg: ExperimentConfig, rng: SeededRng | None = None, threads: int = 1) -> ExperimentResult:
    """Run every setting and replicate; output order never depends on ``threads``.

    Replicate ``r`` of setting ``s`` uses stream ``rng.child(s, r)``.
    """
    rng = rng or SeededRng(cfg.seed)
    jobs = []
    for s, (label, c) in enumerate(settings(cfg)):
        for r in range(c.replicates):
            jobs.append((label, c, rng.child(s, r), r))

    def one(job):
        label, c, stream, r = job
        return [(r, m, k, v, label) for m, k, v in run_replicate(c, stream, r)]

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(one, jobs))
    else:
        parts = [one(j) for j in jobs]
    return ExperimentResult([row for part in parts for row in part], cfg.to_dict())


# -------------------------------------------------------------------- presets


def _entropy(task):
    if task == "regression":
        return ExperimentConfig(
            covariates=CovariateSpec("entropy-mix", n=1000, p=5),
            response=ResponseSpec("single", permute=False),
            noise=NoiseSpec(pve=0.1),
            task="regression",
            methods=["mdi", "mdi-oob", {"label": "mdi-plus-ridge", "method": "mdi-plus", "glm": "ridge"}],
            metrics=["rank:0"],
        )
    return ExperimentConfig(
        covariates=CovariateSpec("entropy-mix", n=1000, p=5),
        response=ResponseSpec("single-affine", permute=False),
        noise=NoiseSpec(),
        task="binary-classification",
        methods=["mdi", "mdi-oob",
                 {"label": "mdi-plus-logistic", "method": "mdi-plus", "glm": "logistic-l2"},
                 {"label": "mdi-plus-ridge", "method": "mdi-plus", "glm": "ridge"}],
        metrics=["rank:0"],
    )


def _correlation():
    return ExperimentConfig(
        covariates=CovariateSpec("correlated-gaussian", n=250, p=100, rho=0.99, block_size=50),
        response=ResponseSpec("linear-plus-lss", permute=False),
        noise=NoiseSpec(pve=0.1),
        methods=["mdi", "mdi-oob", {"label": "mdi-plus-ridge", "method": "mdi-plus", "glm": "ridge"}],
        metrics=["group-ranks"],
        groups={"Sig": "signal", "C-NSig": [0, 50], "NSig": [50, 100]},
    )


def _pve_sweep(kind):
    return ExperimentConfig(
        covariates=CovariateSpec("correlated-gaussian", n=250, p=50, rho=0.6, block_size=25),
        response=ResponseSpec(kind),
        noise=NoiseSpec(pve=0.1),
        methods=["mdi", "mdi-oob", "mda", {"label": "mdi-plus-ridge", "method": "mdi-plus", "glm": "ridge"}],
        metrics=["auroc"],
        sweep={"noise.pve": [0.1, 0.2, 0.4, 0.8]},
    )


def _outlier_sweep(kind):
    return ExperimentConfig(
        covariates=CovariateSpec("correlated-gaussian", n=250, p=50, rho=0.6, block_size=25),
        response=ResponseSpec(kind),
        noise=NoiseSpec(pve=0.4),
        methods=["mdi", {"label": "mdi-plus-ridge", "method": "mdi-plus", "glm": "ridge"},
                 {"label": "mdi-plus-huber", "method": "mdi-plus", "glm": "huber-ridge"}],
        metrics=["auroc"],
        sweep={"noise.outlier_q": [0.0, 0.01, 0.025, 0.05], "noise.mu_corrupt": [10.0, 25.0]},
    )


PRESETS = {
    "entropy-bias-regression": lambda: _entropy("regression"),
    "entropy-bias-classification": lambda: _entropy("binary-classification"),
    "correlation-bias": _correlation,
    "linear-pve": lambda: _pve_sweep("linear"),
    "lss-pve": lambda: _pve_sweep("lss"),
    "poly-pve": lambda: _pve_sweep("poly-interaction"),
    "linear-lss-pve": lambda: _pve_sweep("linear-plus-lss"),
    "linear-outliers": lambda: _outlier_sweep("linear"),
    "lss-outliers": lambda: _outlier_sweep("lss"),
    "poly-outliers": lambda: _outlier_sweep("poly-interaction"),
    "linear-lss-outliers": lambda: _outlier_sweep("linear-plus-lss"),
}


def with_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Copy of ``cfg`` with top-level fields or dotted paths (``"covariates.rho"``) replaced."""
    d = cfg.to_dict()
    for key, value in overrides.items():
        node = d
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override {key!r} does not name a config field")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"override {key!r} does not name a config field")
        node[parts[-1]] = copy.deepcopy(value)
    return ExperimentConfig.from_dict(d)


def preset(name: str, **overrides) -> ExperimentConfig:
    """A built-in experiment, optionally with :func:`with_overrides` applied."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return with_overrides(PRESETS[name](), overrides)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(d)
