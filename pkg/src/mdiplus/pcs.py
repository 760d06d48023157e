"""Choosing among MDI+ models: prediction screening, stability, median-rank ensembles.

A candidate passes screening when its RF+ predictor is not worse on held-out
data than the forest itself. Among survivors the most stable candidate is the
one whose feature rankings agree best (mean pairwise rank-biased overlap)
across bootstrap resamples of the forest's trees.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from mdiplus.data import Dataset, SeededRng
from mdiplus.exceptions import ConfigError, DataError, ScreeningError
from mdiplus.forest import Forest
from mdiplus.glm import GlmSpec
from mdiplus.importance import (
    ImportanceReport, MdiPlusConfig, _map_ordered, aggregate, fit_rf_plus, mdi_plus,
)
from mdiplus.metrics import SimilarityMetric, r_squared, rank_order, ranks, rbo

SELECTION_SCHEMA_VERSION = 1
SCREEN_TOL = 1e-9
DEFAULT_B = 10
DEFAULT_PERSISTENCE = 0.9


@dataclass(frozen=True)
class CandidateModel:
    """One MDI+ model: raw augmentation flag, GLM and similarity metric."""

    id: str
    augment: bool = True
    spec: GlmSpec = field(default_factory=lambda: GlmSpec("ridge"))
    metric: SimilarityMetric = field(default_factory=lambda: SimilarityMetric("r2"))
    loo: bool = True

    def __post_init__(self):
        if not str(self.id):
            raise ConfigError("candidate id must be non-empty")
        self.metric.check_link(self.spec.link)

    def config(self) -> MdiPlusConfig:
        return MdiPlusConfig.from_options(self.spec.family, self.metric.kind, self.augment, self.loo,
                                          self.spec.lambda_grid, self.spec.huber_delta)

    def to_dict(self) -> dict:
        return {
            "id": self.id, "glm": self.spec.family, "metric": self.metric.kind,
            "augment_raw": self.augment, "loo": self.loo,
            "lambda_grid": None if self.spec.lambda_grid is None else list(self.spec.lambda_grid),
            "huber_delta": self.spec.huber_delta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateModel":
        known = {"id", "glm", "metric", "augment_raw", "loo", "lambda_grid", "huber_delta"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown candidate fields {sorted(extra)}")
        if "id" not in d:
            raise ConfigError("candidate needs an id")
        spec = GlmSpec(d.get("glm", "ridge"), lambda_grid=d.get("lambda_grid"), huber_delta=d.get("huber_delta"))
        metric = d.get("metric")
        if metric is None:
            metric = {"logistic-l2": "neg-log-loss", "huber-ridge": "neg-huber"}.get(spec.family, "r2")
        return cls(str(d["id"]), bool(d.get("augment_raw", True)), spec, SimilarityMetric(metric),
                   bool(d.get("loo", True)))


def load_candidates(path) -> list[CandidateModel]:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(raw, dict):
        raw = raw.get("candidates")
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{path}: expected a non-empty list of candidates")
    cands = [CandidateModel.from_dict(d) for d in raw]
    ids = [c.id for c in cands]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate candidate ids in {path}")
    return cands


def holdout_performance(task: str, y, pred) -> float:
    """R^2 for regression, accuracy (threshold 0.5) for binary classification."""
    y = np.asarray(y, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if task == "binary-classification":
        return float(np.mean((pred > 0.5) == (y > 0.5)))
    return r_squared(y, pred)


@dataclass(frozen=True)
class ScreenResult:
    baseline: float
    performance: dict
    screened: list

    def passed(self, cid) -> bool:
        return any(c.id == cid for c in self.screened)


def screen(candidates, train: Dataset, test: Dataset, forest: Forest, tol: float = SCREEN_TOL,
           threads: int = 1) -> ScreenResult:
    """Test performance of every candidate's RF+ and of the forest; never raises on an empty screen."""
    if not candidates:
        raise ConfigError("no candidates given")
    if test.p != forest.n_features:
        raise DataError(f"test data has {test.p} features, forest has {forest.n_features}")
    baseline = holdout_performance(train.task, test.y, forest.predict(test.X))

    def one(c):
        cfg = c.config()
        if cfg.glm.link == "logit" and train.task != "binary-classification":
            raise ConfigError(f"candidate {c.id!r}: a logit-link GLM needs a binary-classification task")
        model = fit_rf_plus(forest, train, cfg.glm, cfg.augment_raw, cfg.sample)
        return holdout_performance(train.task, test.y, model.predict(test.X))

    perf = _map_ordered(one, candidates, threads)
    performance = {c.id: v for c, v in zip(candidates, perf)}
    kept = [c for c, v in zip(candidates, perf) if v >= baseline - tol]
    return ScreenResult(baseline, performance, kept)


def prediction_screen(candidates, train: Dataset, test: Dataset, forest: Forest, tol: float = SCREEN_TOL,
                      threads: int = 1) -> list:
    """Candidates whose RF+ test performance is at least the forest's (minus ``tol``).

    Raises :class:`ScreeningError` (with ``.result``) when nothing passes.
    """
    res = screen(candidates, train, test, forest, tol, threads)
    if not res.screened:
        err = ScreeningError(
            f"all {len(candidates)} candidates predict worse than the forest "
            f"(baseline {res.baseline:.6g}); consider falling back to the full candidate list")
        err.result = res
        raise err
    return res.screened


@dataclass(frozen=True)
class StabilityResult:
    """``per_candidate`` maps id to mean pairwise RBO; ``reports`` holds each
    candidate's importance on the full forest."""

    per_candidate: dict
    chosen: str
    B: int
    persistence: float
    reports: dict = field(default_factory=dict, repr=False)


def tree_bootstraps(n_trees: int, B: int, rng: SeededRng) -> list[np.ndarray]:
    """``B`` resamples (with replacement) of tree indices; resample ``b`` uses ``rng.child(b)``."""
    return [rng.child(b).generator().integers(0, n_trees, size=n_trees) for b in range(B)]


def mean_pairwise_rbo(rankings, persistence: float = DEFAULT_PERSISTENCE) -> float:
    pairs = list(combinations(range(len(rankings)), 2))
    if not pairs:
        raise ConfigError("need at least two rankings")
    return float(np.mean([rbo(rankings[a], rankings[b], persistence) for a, b in pairs]))


def stability_select(screened, forest: Forest, data: Dataset, B: int = DEFAULT_B,
                     persistence: float = DEFAULT_PERSISTENCE, rng: SeededRng | None = None,
                     threads: int = 1) -> StabilityResult:
    """Pick the candidate with the most stable rankings over tree bootstraps.

    Per-tree scores are computed once per candidate; a bootstrap sample of
    trees only re-averages them. All candidates see the same resamples.
    Ties go to the earlier candidate in ``screened``.
    """
    if B < 2:
        raise ConfigError("B must be >= 2")
    if len(forest) < 2:
        raise ConfigError("stability selection needs a forest with >= 2 trees")
    if not screened:
        raise ConfigError("no candidates to select from")
    rng = rng or SeededRng(forest.seed)
    boots = tree_bootstraps(len(forest), B, rng)

    def one(c):
        rep = mdi_plus(forest, data, c.config())
        rankings = [rank_order(aggregate(rep.per_tree[idx], "mdi-plus", data.column_names).scores)
                    for idx in boots]
        return rep, mean_pairwise_rbo(rankings, persistence)

    results = _map_ordered(one, screened, threads)
    per = {c.id: r[1] for c, r in zip(screened, results)}
    best = max(range(len(screened)), key=lambda i: (results[i][1], -i))
    return StabilityResult(per, screened[best].id, B, persistence,
                           {c.id: r[0] for c, r in zip(screened, results)})


def ensemble_rank(reports) -> ImportanceReport:
    """Median rank per feature across reports; score is the negated median."""
    reports = list(reports)
    if not reports:
        raise ConfigError("ensemble_rank needs at least one report")
    names = reports[0].feature_names
    for r in reports[1:]:
        if tuple(r.feature_names) != tuple(names):
            raise DataError("reports cover different feature sets")
    R = np.array([ranks(r.scores) for r in reports], dtype=float)
    med = np.median(R, axis=0)
    return ImportanceReport("ensemble-median-rank", -med, tuple(names), None, None,
                            {"members": [r.method for r in reports], "n_reports": len(reports)})


def selection_summary(screen_result: ScreenResult, candidates, stability: StabilityResult | None,
                      task: str, fallback: bool = False) -> dict:
    rows = []
    for c in candidates:
        mean = None if stability is None else stability.per_candidate.get(c.id)
        rows.append({
            "id": c.id,
            "test_performance": screen_result.performance[c.id],
            "mean_rbo": mean,
            "screened": screen_result.passed(c.id),
            "chosen": stability is not None and stability.chosen == c.id,
        })
    return {
        "schema_version": SELECTION_SCHEMA_VERSION,
        "kind": "selection",
        "performance_metric": "accuracy" if task == "binary-classification" else "r2",
        "baseline_performance": screen_result.baseline,
        "B": None if stability is None else stability.B,
        "persistence": None if stability is None else stability.persistence,
        "fallback_to_all_candidates": fallback,
        "chosen": None if stability is None else stability.chosen,
        "candidates": rows,
    }
