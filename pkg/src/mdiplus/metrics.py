"""Similarity metrics, ranking helpers, AUROC and rank-biased overlap.

Every similarity metric is oriented so that larger means closer agreement.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from mdiplus.exceptions import ConfigError, DataError

PROB_CLAMP = 1e-12
METRICS = ("r2", "r2-unnormalized", "neg-log-loss", "neg-huber")
_ALIASES = {
    "r-squared": "r2",
    "r2-normalized": "r2",
    "unnormalized-r2": "r2-unnormalized",
    "neg-log-loss": "neg-log-loss",
    "log-loss": "neg-log-loss",
    "neg-huber-loss": "neg-huber",
    "huber": "neg-huber",
}


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise DataError(f"length mismatch: {y.shape[0]} responses vs {yhat.shape[0]} predictions")
    if y.size == 0:
        raise DataError("empty input")
    return y, yhat


def r_squared(y, yhat) -> float:
    """``1 - SSE/SST``; negative for predictors worse than the mean."""
    y, yhat = _pair(y, yhat)
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0:
        raise DataError("R^2 is undefined for a constant response")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / sst


def unnormalized_r2(y, yhat) -> float:
    """``(SST - SSE) / n``: R^2 scaled by the empirical variance of ``y``."""
    y, yhat = _pair(y, yhat)
    return float(np.mean((y - y.mean()) ** 2) - np.mean((y - yhat) ** 2))


def neg_log_loss(y, p) -> float:
    y, p = _pair(y, p)
    p = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    return float(np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def huber_loss(r, delta):
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * a - 0.5 * delta * delta)


def neg_huber_loss(y, yhat, delta: float) -> float:
    if not delta > 0:
        raise ConfigError("huber delta must be positive")
    y, yhat = _pair(y, yhat)
    return -float(np.mean(huber_loss(y - yhat, delta)))


def robust_delta(residuals, constant: float = 1.35) -> float:
    """``constant`` times the MAD-based scale of ``residuals`` (1.0 if that scale is 0)."""
    r = np.asarray(residuals, dtype=float)
    scale = 1.4826 * np.median(np.abs(r - np.median(r)))
    if scale <= 0:
        scale = r.std()
    return constant * scale if scale > 0 else 1.0


def normalize_metric(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in METRICS:
        raise ConfigError(f"unknown metric {kind!r}; expected one of {METRICS}")
    return kind


@dataclass(frozen=True)
class SimilarityMetric:
    """Named metric; ``huber_delta=None`` lets the caller supply a data-driven delta."""

    kind: str = "r2"
    huber_delta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_metric(self.kind))
        if self.huber_delta is not None and not self.huber_delta > 0:
            raise ConfigError("huber_delta must be positive")

    def check_link(self, link: str):
        if self.kind == "neg-log-loss" and link != "logit":
            raise ConfigError("neg-log-loss needs a GLM with a logit link")
        if self.kind != "neg-log-loss" and link == "logit":
            raise ConfigError(f"metric {self.kind!r} is not defined for probabilities; use neg-log-loss")

    def __call__(self, y, yhat, delta: float | None = None) -> float:
        if self.kind == "r2":
            return r_squared(y, yhat)
        if self.kind == "r2-unnormalized":
            return unnormalized_r2(y, yhat)
        if self.kind == "neg-log-loss":
            return neg_log_loss(y, yhat)
        d = self.huber_delta if self.huber_delta is not None else delta
        if d is None:
            d = robust_delta(np.asarray(y) - np.median(y))
        return neg_huber_loss(y, yhat, d)


# ------------------------------------------------------------------ rankings


def rank_order(scores) -> np.ndarray:
    """Feature indices from best to worst; NaN and -inf last, ties by index."""
    s = np.asarray(scores, dtype=float).copy()
    s[np.isnan(s)] = -np.inf
    return np.lexsort((np.arange(s.size), -s))


def ranks(scores) -> np.ndarray:
    """1-based rank of every feature under :func:`rank_order`."""
    order = rank_order(scores)
    out = np.empty(order.size, dtype=np.intp)
    out[order] = np.arange(1, order.size + 1)
    return out


def auroc(scores, signal) -> float:
    """Mann-Whitney AUROC of ``scores`` for separating ``signal`` features; ties count 1/2."""
    s = np.asarray(scores, dtype=float).ravel()
    lab = np.asarray(signal, dtype=bool).ravel()
    if s.shape != lab.shape:
        raise DataError("scores and signal must have the same length")
    n_pos = int(lab.sum())
    n_neg = lab.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUROC needs at least one signal and one non-signal feature")
    s = np.where(np.isnan(s), -np.inf, s)
    r = rankdata(s, method="average")
    u = r[lab].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def rbo(rank_a, rank_b, persistence: float = 0.9) -> float:
    """Rank-biased overlap of two full rankings of the same items.

    Uses the normalised prefix form
    ``sum_d p^(d-1) |A[:d] & B[:d]| / d  /  sum_d p^(d-1)``, which is 1 exactly
    for identical rankings.
    """
    a = list(rank_a)
    b = list(rank_b)
    if not 0 < persistence < 1:
        raise ConfigError("persistence must lie in (0, 1)")
    if len(a) != len(b) or len(set(a)) != len(a) or set(a) != set(b):
        raise DataError("rbo needs two permutations of the same items")
    seen_a, seen_b = set(), set()
    overlap = 0
    num = 0.0
    den = 0.0
    weight = 1.0
    for d, (x, y) in enumerate(zip(a, b), start=1):
        if x == y:
            overlap += 1
        else:
            overlap += (x in seen_b) + (y in seen_a)
        seen_a.add(x)
        seen_b.add(y)
        num += weight * overlap / d
        den += weight
        weight *= persistence
    return num / den
