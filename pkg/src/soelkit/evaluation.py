"""Metrics, the ranking-generalization check, the simulated oracle, and sweeps.

AUC uses the rank-statistic form with half credit for ties (Mann-Whitney).
The F1 metric thresholds at the top ceil(ratio * n) scores; by convention
the harness uses the test-set anomaly fraction as the ratio.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import (
    ContaminationSpec,
    Dataset,
    SplitResult,
    make_one_vs_rest_split,
    make_tabular_split,
    make_toy_split,
)
from .errors import DataValidationError
from .querying import QueryPlan, cover_radius
from .scorer import score_batch
from .training import TrainConfig, train


class OracleHandle:
    """Answers label queries against the hidden train labels and logs them."""

    def __init__(self, split: SplitResult):
        self._labels = split.train_hidden_labels
        self.query_log: list[tuple[int, float]] = []

    def answer(self, index: int) -> int:
        if not (0 <= index < self._labels.shape[0]):
            raise LookupError(f"index {index} outside the train split")
        self.query_log.append((int(index), time.time()))
        return int(self._labels[index])

    @property
    def distinct_queried(self) -> int:
        return len({i for i, _ in self.query_log})

    def true_ratio(self) -> float:
        return float(np.mean(self._labels))


def oracle_answer(handle: OracleHandle, index: int) -> int:
    return handle.answer(index)


def auc(scores, labels) -> float:
    """Probability that an anomaly outranks a normal point, ties half-credit."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n1 = int(np.sum(labels == 1))
    n0 = int(np.sum(labels == 0))
    if n0 == 0 or n1 == 0:
        raise DataValidationError("auc needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i: j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n1 * (n1 + 1) / 2.0) / (n0 * n1)


def f1_at_ratio(scores, labels, ratio: float) -> float:
    """F1 of predicting the top ceil(ratio * n) scores as anomalies."""
    if not (0.0 < ratio < 1.0):
        raise DataValidationError("ratio must be in (0, 1)")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n = scores.size
    k = int(np.ceil(ratio * n))
    pred = np.zeros(n, dtype=np.int64)
    pred[np.argsort(-scores, kind="stable")[:k]] = 1
    tp = int(np.sum((pred == 1) & (labels == 1)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


@dataclass(frozen=True)
class RankingReport:
    delta: float
    lambda_hat: float
    margin: float
    margin_ok: bool
    ranking_ok: bool | None       # None when the premise fails (no claim)
    counterexamples: list
    applicable: bool

    def status(self) -> str:
        if not self.applicable:
            return "not applicable (margin premise unmet)"
        return "ok" if self.ranking_ok else "ranking violated"


def estimate_lipschitz(points: np.ndarray, scores: np.ndarray,
                       extra_pairs: int = 10000, seed: int = 0) -> float:
    """Max |score difference| / distance over sampled plus exhaustive pairs.

    A lower bound on the true constant; small instances are covered
    exhaustively.
    """
    n = points.shape[0]
    best = 0.0
    rng = np.random.default_rng(seed)
    if n * (n - 1) // 2 <= extra_pairs:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    else:
        pairs = zip(rng.integers(0, n, extra_pairs), rng.integers(0, n, extra_pairs))
    for i, j in pairs:
        if i == j:
            continue
        dist = float(np.linalg.norm(points[i] - points[j]))
        if dist > 0:
            best = max(best, abs(float(scores[i] - scores[j])) / dist)
    return best


def check_ranking_generalization(embeddings, labels, query_indices, scores,
                                 lipschitz_estimate: float | None = None):
    """Check the cover-margin condition and, when it holds, the implied ranking.

    With cover radius delta and Lipschitz estimate L, the premise asks every
    labeled anomaly to outscore every labeled normal by at least 2*delta*L.
    When the premise holds, every unlabeled anomaly must outscore every
    unlabeled normal; counterexamples are reported. When the premise fails
    the check makes no claim (ranking_ok is None).
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    q_idx = np.asarray(query_indices, dtype=np.int64)

    delta = cover_radius(embeddings, labels, q_idx)
    lam = (estimate_lipschitz(embeddings, scores)
           if lipschitz_estimate is None else float(lipschitz_estimate))

    queried = np.zeros(labels.shape[0], dtype=bool)
    queried[q_idx] = True
    q_anom = scores[queried & (labels == 1)]
    q_norm = scores[queried & (labels == 0)]
    if q_anom.size == 0 or q_norm.size == 0:
        raise DataValidationError("query set must contain both classes")
    margin = float(q_anom.min() - q_norm.max())
    margin_ok = margin >= 2.0 * delta * lam

    ranking_ok = None
    counterexamples = []
    if margin_ok:
        u_anom = np.flatnonzero(~queried & (labels == 1))
        u_norm = np.flatnonzero(~queried & (labels == 0))
        ranking_ok = True
        for a in u_anom:
            bad = u_norm[scores[u_norm] > scores[a]]
            for b in bad[:5]:
                counterexamples.append((int(a), int(b)))
            if bad.size:
                ranking_ok = False
    return RankingReport(
        delta=float(delta), lambda_hat=float(lam), margin=margin,
        margin_ok=margin_ok, ranking_ok=ranking_ok,
        counterexamples=counterexamples, applicable=margin_ok,
    )


# ---------------------------------------------------------------------------
# experiment runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodSpec:
    """One sweep arm: a query strategy paired with a training objective."""

    name: str
    strategy: str | None      # None = zero-budget unsupervised run
    train_method: str = "SOEL"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Dataset | None
    contamination: ContaminationSpec | None
    methods: tuple
    budgets: tuple
    train: TrainConfig
    n_seeds: int = 5
    metric: str = "auc"
    base_seed: int = 0
    toy: dict | None = None   # {n_normal, n_anomaly, geometry} builds splits
    tau: float = 0.01
    query_beta: float = 1.0

    def __post_init__(self):
        if self.n_seeds < 1:
            raise DataValidationError("n_seeds must be >= 1")
        if self.metric not in ("auc", "f1"):
            raise DataValidationError("metric must be 'auc' or 'f1'")
        if self.dataset is None and self.toy is None:
            raise DataValidationError("either a dataset or a toy spec is required")


@dataclass
class ExperimentResult:
    rows: list = field(default_factory=list)   # dicts: method,budget,seed,metric,value
    errors: list = field(default_factory=list)
    runtime_s: float = 0.0

    def aggregate(self) -> list:
        table = {}
        for r in self.rows:
            table.setdefault((r["method"], r["budget"]), []).append(r["value"])
        out = []
        for (method, budget), vals in sorted(table.items()):
            arr = np.array(vals)
            out.append({
                "method": method, "budget": budget,
                "mean": float(arr.mean()), "std": float(arr.std()),
                "n": int(arr.size),
            })
        return out

    def mean_for(self, method: str, budget: int) -> float:
        vals = [r["value"] for r in self.rows
                if r["method"] == method and r["budget"] == budget]
        return float(np.mean(vals))


def _build_split(config: ExperimentConfig, seed: int) -> SplitResult:
    if config.toy is not None:
        return make_toy_split(config.toy["n_normal"], config.toy["n_anomaly"],
                              config.toy.get("geometry", "blob-ring"), seed)
    spec = ContaminationSpec(
        contamination_ratio=config.contamination.contamination_ratio,
        seed=seed, normal_class=config.contamination.normal_class)
    if spec.normal_class is not None:
        return make_one_vs_rest_split(config.dataset, spec)
    return make_tabular_split(config.dataset, spec)


def run_cell(config: ExperimentConfig, method: MethodSpec, budget: int,
             seed_index: int) -> float:
    """One (method, budget, seed) cell: split, train, evaluate on test."""
    seed = config.base_seed + seed_index
    split = _build_split(config, seed)
    oracle = OracleHandle(split)
    assumed = None
    if method.strategy in ("Mar", "Hybr1"):
        assumed = oracle.true_ratio()  # these strategies receive the true ratio
    plan = None
    if method.strategy is not None and budget > 0:
        plan = QueryPlan(strategy=method.strategy, budget=budget, tau=config.tau,
                         beta=config.query_beta, assumed_ratio=assumed, seed=seed)
    tconf = TrainConfig(
        method=method.train_method, epochs=config.train.epochs,
        batch_size=config.train.batch_size,
        learning_rate=config.train.learning_rate,
        y_tilde_value=config.train.y_tilde_value,
        alpha_source=config.train.alpha_source,
        alpha_value=config.train.alpha_value,
        warmup_epochs=config.train.warmup_epochs,
        hidden_dims=config.train.hidden_dims,
        embed_dim=config.train.embed_dim, seed=seed)
    state, _partition, _report = train(tconf, split, plan, oracle)
    test_scores = score_batch(state, split.test.features)
    if config.metric == "auc":
        return auc(test_scores, split.test.labels)
    ratio = float(np.mean(split.test.labels == 1))
    return f1_at_ratio(test_scores, split.test.labels, ratio)


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Sweep methods x budgets x seeds; per-cell failures recorded, not fatal."""
    result = ExperimentResult()
    t0 = time.perf_counter()
    cells = [(m, b, s) for m in config.methods for b in config.budgets
             for s in range(config.n_seeds)]

    def _run(cell):
        method, budget, s = cell
        return run_cell(config, method, budget, s)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_safe(_run), cells))
    else:
        outcomes = [_safe(_run)(c) for c in cells]

    for (method, budget, s), out in zip(cells, outcomes):
        if isinstance(out, Exception):
            result.errors.append({
                "method": method.name, "budget": int(budget),
                "seed": config.base_seed + s, "error": repr(out),
            })
        else:
            result.rows.append({
                "method": method.name, "budget": int(budget),
                "seed": config.base_seed + s, "metric": config.metric,
                "value": float(out),
            })
    result.runtime_s = time.perf_counter() - t0
    return result


def _safe(fn):
    def inner(arg):
        try:
            return fn(arg)
        except Exception as exc:   # cell failures are data, not crashes
            return exc
    return inner
