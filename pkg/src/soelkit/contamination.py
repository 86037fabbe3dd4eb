"""Contamination-ratio estimation from a non-i.i.d. query set.

The estimator importance-weights each queried label by the ratio of two
Gaussian kernel densities over anomaly scores: p fit on the full training
pool, q fit on the queried scores. Bandwidths are the average spacing of
the sorted unique scores of the data each density is fit on. The raw mean
of weight * label is clamped into [0, 0.5) to respect the mixture model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataValidationError, DegenerateDensityError

WEIGHT_FLOOR = 1e-12
ALPHA_CAP = float(np.nextafter(0.5, 0.0))


@dataclass(frozen=True)
class ScoreDensity:
    """Gaussian KDE over a one-dimensional score sample."""

    support_points: np.ndarray
    bandwidth: float

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return kernels.gaussian_kde_eval(self.support_points, self.bandwidth, x)


@dataclass(frozen=True)
class AlphaEstimate:
    """Clamped estimate, raw value, and the per-query importance weights."""

    alpha_hat: float
    raw_alpha: float
    weights: np.ndarray
    clipped_count: int
    bandwidth_p: float
    bandwidth_q: float
    fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "raw_alpha": self.raw_alpha,
            "weights": self.weights.tolist(),
            "clipped_count": self.clipped_count,
            "bandwidth_p": self.bandwidth_p,
            "bandwidth_q": self.bandwidth_q,
            "fallback": self.fallback,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def kde_fit(scores) -> ScoreDensity:
    """Fit a Gaussian KDE; bandwidth = mean consecutive gap of unique scores."""
    scores = np.sort(np.asarray(scores, dtype=np.float64))
    if scores.size < 2:
        raise DataValidationError("kde_fit needs at least 2 scores")
    uniq = np.unique(scores)
    if uniq.size < 2:
        raise DegenerateDensityError("all scores identical; bandwidth would be 0")
    bandwidth = float(np.mean(np.diff(uniq)))
    return ScoreDensity(support_points=scores, bandwidth=bandwidth)


def estimate_alpha(train_scores, query_scores, query_labels) -> AlphaEstimate:
    """Importance-weighted contamination estimate from queried labels.

    With fewer than two queried points the query density is undefined and
    the estimate falls back to the raw label mean (flagged).
    """
    query_scores = np.asarray(query_scores, dtype=np.float64)
    query_labels = np.asarray(query_labels, dtype=np.float64)
    if query_scores.size == 0:
        raise DataValidationError("query_scores must be non-empty")
    if query_scores.shape != query_labels.shape:
        raise DataValidationError("query scores and labels must align")

    if query_scores.size < 2:
        raw = float(query_labels.mean())
        return AlphaEstimate(
            alpha_hat=float(np.clip(raw, 0.0, ALPHA_CAP)),
            raw_alpha=raw,
            weights=np.ones_like(query_scores),
            clipped_count=0,
            bandwidth_p=float("nan"),
            bandwidth_q=float("nan"),
            fallback=True,
        )

    p_density = kde_fit(train_scores)
    q_density = kde_fit(query_scores)
    p_vals = p_density(query_scores)
    q_vals = q_density(query_scores)
    clipped = int(np.sum(q_vals < WEIGHT_FLOOR))
    weights = p_vals / np.maximum(q_vals, WEIGHT_FLOOR)
    raw = float(np.mean(weights * query_labels))
    return AlphaEstimate(
        alpha_hat=float(np.clip(raw, 0.0, ALPHA_CAP)),
        raw_alpha=raw,
        weights=weights,
        clipped_count=clipped,
        bandwidth_p=p_density.bandwidth,
        bandwidth_q=q_density.bandwidth,
    )


def residual_alpha(alpha_hat: float, n_total: int, queried_labels,
                   unqueried_count: int) -> float:
    """Anomaly fraction left in the unqueried set after removing queried hits.

    alpha_tilde = (alpha_hat * N - sum(queried labels)) / |U|, clamped to
    [0, 0.5].
    """
    if unqueried_count < 1:
        raise DataValidationError("unqueried_count must be >= 1")
    labels = np.asarray(queried_labels, dtype=np.float64)
    value = (alpha_hat * n_total - labels.sum()) / unqueried_count
    return float(np.clip(value, 0.0, 0.5))
