"""Budgeted query selection strategies and the cover-radius diagnostic.

Strategies:
  Diverse      k-means++ seeding: first index uniform, then each next index
               drawn with probability softmax(h_i / tau) where h_i is the
               Euclidean embedding distance to the closest queried sample.
  Rand1        uniform without replacement.
  Rand2        uniform among the top ceil(N/2) rows ranked by score.
  Mar          the K samples closest to the margin s_alpha, the
               (1 - assumed_ratio) empirical quantile of scores.
  Hybr1        margin query with neighborhood-based diversification.
  Pos1, Pos2   top-K by score (they differ only in training loss).
  Hybr2, Hybr3 normalized score + beta * normalized min-distance, greedy.

Deterministic strategies ignore the seed; ties break toward the lowest
index. The diverse strategy is O(K*N) distance work per selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import Dataset
from .errors import CapacityError, CoverageUndefinedError, DataValidationError

STRATEGIES = ("Diverse", "Rand1", "Rand2", "Mar", "Hybr1", "Pos1", "Pos2",
              "Hybr2", "Hybr3")


@dataclass(frozen=True)
class QueryPlan:
    """Strategy id plus its hyperparameters."""

    strategy: str
    budget: int
    tau: float = 0.01
    beta: float = 1.0
    k_neighbors: int | None = None
    assumed_ratio: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise DataValidationError(f"unknown strategy {self.strategy!r}")
        if self.budget < 1:
            raise DataValidationError("budget must be >= 1")
        if self.tau <= 0:
            raise DataValidationError("tau must be > 0")
        if not np.isfinite(self.beta):
            raise DataValidationError("beta must be finite")


@dataclass(frozen=True)
class QuerySet:
    """Ordered selected indices; per-step draw probabilities for Diverse."""

    indices: np.ndarray
    selection_probs: np.ndarray | None = None


def _dist_to_point(embeddings: np.ndarray, idx: int) -> np.ndarray:
    return np.sqrt(kernels.sq_dists_to_point(embeddings, embeddings[idx]))


def _select_diverse(embeddings, k, tau, rng):
    n = embeddings.shape[0]
    first = int(rng.integers(n))
    chosen = [first]
    probs = [1.0 / n]
    h = _dist_to_point(embeddings, first)
    in_pool = np.ones(n, dtype=bool)
    in_pool[first] = False
    for _ in range(k - 1):
        pool = np.flatnonzero(in_pool)
        logits = h[pool] / tau
        logits -= logits.max()  # overflow guard; probabilities unchanged
        p = np.exp(logits)
        p /= p.sum()
        j = int(rng.choice(pool, p=p))
        chosen.append(j)
        probs.append(float(p[np.searchsorted(pool, j)]))
        in_pool[j] = False
        np.minimum(h, _dist_to_point(embeddings, j), out=h)
    return np.array(chosen), np.array(probs)


def _top_k_stable(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest values; ties resolved toward lower index."""
    return np.argsort(-values, kind="stable")[:k]


def _minmax_or_half(values: np.ndarray) -> np.ndarray:
    """Min-max normalize; a zero range degenerates to the constant 0.5."""
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full(values.shape, 0.5)
    return (values - lo) / (hi - lo)


def _select_margin(scores, k, assumed_ratio):
    s_alpha = np.quantile(scores, 1.0 - assumed_ratio)
    return _top_k_stable(-np.abs(scores - s_alpha), k)


def _select_hybr1(embeddings, scores, k, assumed_ratio, beta, k_neighbors):
    n = scores.size
    s_alpha = np.quantile(scores, 1.0 - assumed_ratio)
    margin = np.abs(scores - s_alpha)
    margin_term = _minmax_or_half(margin)
    # k nearest neighbors of every sample (self excluded), lowest index on ties
    d2 = kernels.pairwise_sq_dists(embeddings, embeddings)
    np.fill_diagonal(d2, np.inf)
    nn = np.argsort(d2, axis=1, kind="stable")[:, :k_neighbors]

    chosen = [int(np.argmin(margin))]
    selected = np.zeros(n, dtype=bool)
    selected[chosen[0]] = True
    for _ in range(k - 1):
        covered = selected[nn].sum(axis=1)
        crit = 0.5 + covered / (2.0 * k_neighbors) + beta * margin_term
        crit[selected] = np.inf
        j = int(np.argmin(crit))
        chosen.append(j)
        selected[j] = True
    return np.array(chosen)


def _select_score_diverse(embeddings, scores, k, beta):
    n = scores.size
    score_term = _minmax_or_half(scores)
    d2 = kernels.pairwise_sq_dists(embeddings, embeddings)
    iu = np.triu_indices(n, k=1)
    off = np.sqrt(d2[iu]) if iu[0].size else np.array([0.0])
    d_lo, d_hi = off.min(), off.max()
    d_range = d_hi - d_lo

    chosen = [int(np.argmax(scores))]
    selected = np.zeros(n, dtype=bool)
    selected[chosen[0]] = True
    min_d = np.sqrt(d2[:, chosen[0]])
    for _ in range(k - 1):
        if d_range == 0.0:
            dist_term = np.full(n, 0.5)
        else:
            dist_term = (min_d - d_lo) / d_range
        crit = score_term + beta * dist_term
        crit[selected] = -np.inf
        j = int(np.argmax(crit))
        chosen.append(j)
        selected[j] = True
        np.minimum(min_d, np.sqrt(d2[:, j]), out=min_d)
    return np.array(chosen)


def select_queries(plan: QueryPlan, embeddings: np.ndarray,
                   scores: np.ndarray) -> QuerySet:
    """Select `plan.budget` distinct pool indices per the plan's strategy."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    n = embeddings.shape[0]
    if embeddings.ndim != 2 or scores.shape != (n,):
        raise DataValidationError("embeddings must be (N, E) with length-N scores")
    k = plan.budget
    if k > n:
        raise CapacityError(f"budget {k} exceeds pool size {n}")
    if plan.strategy in ("Mar", "Hybr1"):
        if plan.assumed_ratio is None or not (0.0 < plan.assumed_ratio < 1.0):
            raise DataValidationError(
                f"{plan.strategy} requires assumed_ratio in (0, 1)"
            )

    rng = np.random.default_rng(plan.seed)
    if plan.strategy == "Diverse":
        idx, probs = _select_diverse(embeddings, k, plan.tau, rng)
        return QuerySet(indices=idx, selection_probs=probs)
    if plan.strategy == "Rand1":
        return QuerySet(indices=rng.choice(n, size=k, replace=False))
    if plan.strategy == "Rand2":
        n_top = int(np.ceil(n / 2))
        if k > n_top:
            raise CapacityError(
                f"budget {k} exceeds the top-50% candidate pool ({n_top})"
            )
        candidates = _top_k_stable(scores, n_top)
        return QuerySet(indices=rng.choice(candidates, size=k, replace=False))
    if plan.strategy == "Mar":
        return QuerySet(indices=_select_margin(scores, k, plan.assumed_ratio))
    if plan.strategy == "Hybr1":
        k_nn = plan.k_neighbors if plan.k_neighbors else int(np.ceil(n / k))
        return QuerySet(indices=_select_hybr1(
            embeddings, scores, k, plan.assumed_ratio, plan.beta, k_nn))
    if plan.strategy in ("Pos1", "Pos2"):
        return QuerySet(indices=_top_k_stable(scores, k))
    # Hybr2 / Hybr3 share the positive-diverse selection rule
    return QuerySet(indices=_select_score_diverse(embeddings, scores, k, plan.beta))


def cover_radius(embeddings: np.ndarray, true_labels: np.ndarray,
                 query_indices: np.ndarray) -> float:
    """Smallest radius covering every unqueried point by a same-class query.

    delta = max over unqueried i of min over queried j with y_i == y_j of
    the Euclidean embedding distance. Raises CoverageUndefinedError naming
    the class when some unqueried point has no queried sample of its class.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(true_labels)
    queried = np.zeros(labels.shape[0], dtype=bool)
    queried[np.asarray(query_indices, dtype=np.int64)] = True
    unqueried = ~queried
    delta_sq = 0.0
    for cls in np.unique(labels[unqueried]):
        q_mask = queried & (labels == cls)
        if not q_mask.any():
            raise CoverageUndefinedError(cls)
        u_mask = unqueried & (labels == cls)
        worst = kernels.maxmin_sq_dist(embeddings[u_mask], embeddings[q_mask])
        delta_sq = max(delta_sq, worst)
    return float(np.sqrt(delta_sq))


def _centroid_scores(features: np.ndarray) -> np.ndarray:
    return np.sqrt(kernels.sq_dists_to_point(features, features.mean(axis=0)))


def cover_radius_study(
    strategies,
    data: Dataset,
    budgets,
    repetitions: int = 50,
    seed: int = 0,
    tau: float = 0.5,
    assumed_ratio: float | None = None,
    representation=None,
):
    """Monte-Carlo mean/std of the cover radius per (strategy, budget).

    Each repetition r derives its own seed as seed + r. `representation`
    maps (data, rep_seed) -> (embeddings, scores); the default uses raw
    features with distance-from-centroid scores. Repetitions whose query
    set misses a class are skipped and excluded from n_valid.

    Returns a list of dict rows: strategy, budget, mean_delta, std_delta,
    n_valid.
    """
    if data.labels is None:
        raise DataValidationError("cover_radius_study needs labeled data")
    if representation is None:
        representation = lambda d, s: (d.features, _centroid_scores(d.features))
    if assumed_ratio is None:
        assumed_ratio = max(float(np.mean(data.labels == 1)), 1.0 / data.n)

    rows = []
    for strategy in strategies:
        for budget in budgets:
            if budget > data.n:
                raise CapacityError(f"budget {budget} exceeds N={data.n}")
            deltas = []
            for rep in range(repetitions):
                rep_seed = seed + rep
                emb, sc = representation(data, rep_seed)
                plan = QueryPlan(strategy=strategy, budget=budget, tau=tau,
                                 assumed_ratio=assumed_ratio, seed=rep_seed)
                qs = select_queries(plan, emb, sc)
                try:
                    deltas.append(cover_radius(emb, data.labels, qs.indices))
                except CoverageUndefinedError:
                    continue
            arr = np.array(deltas)
            rows.append({
                "strategy": strategy,
                "budget": int(budget),
                "mean_delta": float(arr.mean()) if arr.size else float("nan"),
                "std_delta": float(arr.std()) if arr.size else float("nan"),
                "n_valid": int(arr.size),
            })
    return rows
