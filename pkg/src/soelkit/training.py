"""Semi-supervised outlier-exposure training and the baseline losses.

The main loss averages the supervised term over the queried set and the
pseudo-labeled term over the unqueried set, weighting the two averages
equally. Training alternates between assigning pseudo-labels (rank the
unqueried rows by l0 - l1, mark the top ceil(alpha_tilde * |U|)) and Adam
steps on mini-batches that combine the full queried set with an unqueried
subsample (queried rows weighted 1/|Q|, unqueried rows 1/|U|).

The pipeline is split into prepare_run (warmup + query selection) and
finish_run (labels -> ratio estimate -> fine-tuning) so that an external
labeling step can sit between the two; train() composes them with an
oracle.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .contamination import estimate_alpha, residual_alpha
from .data import SplitResult
from .errors import DataValidationError, DegenerateCentersError, NumericalError
from .querying import QueryPlan, select_queries
from .scorer import (
    ScorerState,
    embed_batch,
    init_scorer,
    loss_gaps,
    score_batch,
    weighted_loss_grad,
    adam_step,
)

TRAIN_METHODS = ("SOEL", "Rand1Loss", "Pos1Loss", "Hybr3Loss")
EARLY_STOP_REL_TOL = 1e-6
EARLY_STOP_PATIENCE = 5


@dataclass
class LabelPartition:
    """Queried indices with oracle labels; unqueried with pseudo-labels."""

    queried_indices: np.ndarray
    queried_labels: np.ndarray
    unqueried_indices: np.ndarray
    pseudo_labels: np.ndarray
    y_tilde_value: float = 0.5

    def __post_init__(self):
        q = set(self.queried_indices.tolist())
        u = set(self.unqueried_indices.tolist())
        if q & u:
            raise DataValidationError("queried and unqueried sets overlap")
        if self.pseudo_labels.shape != self.unqueried_indices.shape:
            raise DataValidationError("pseudo labels must align with unqueried indices")
        if not (0.0 < self.y_tilde_value <= 1.0):
            raise DataValidationError("y_tilde_value must be in (0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    method: str = "SOEL"
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    y_tilde_value: float = 0.5
    alpha_source: str = "estimated"   # estimated | oracle | fixed
    alpha_value: float | None = None
    warmup_epochs: int = 1
    hidden_dims: tuple = (64, 32)
    embed_dim: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.method not in TRAIN_METHODS:
            raise DataValidationError(f"unknown method {self.method!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise DataValidationError("epochs and batch_size must be >= 1")
        if self.alpha_source not in ("estimated", "oracle", "fixed"):
            raise DataValidationError(f"bad alpha_source {self.alpha_source!r}")
        if self.alpha_source == "fixed" and self.alpha_value is None:
            raise DataValidationError("alpha_source='fixed' needs alpha_value")


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    flip_counts: list = field(default_factory=list)
    alpha_hat: float | None = None
    alpha_tilde: float | None = None
    alpha_raw: float | None = None
    alpha_fallback: bool = False
    stopped_early_at: int | None = None
    wall_clock_s: float = 0.0

    def to_dict(self, deterministic: bool = False) -> dict:
        out = {
            "epoch_losses": self.epoch_losses,
            "flip_counts": self.flip_counts,
            "alpha_hat": self.alpha_hat,
            "alpha_tilde": self.alpha_tilde,
            "alpha_raw": self.alpha_raw,
            "alpha_fallback": self.alpha_fallback,
            "stopped_early_at": self.stopped_early_at,
        }
        if not deterministic:
            out["wall_clock_s"] = self.wall_clock_s
        return out


def assign_pseudo_labels(gaps, alpha_tilde: float, y_tilde_value: float = 0.5):
    """Mark the ceil(alpha_tilde * |U|) largest l0-l1 gaps with y_tilde_value.

    Ties break toward the lower index; everything else gets 0. This is the
    exact solution of the constrained assignment (the loss is linear in
    each pseudo-label).
    """
    gaps = np.asarray(gaps, dtype=np.float64)
    if not (0.0 <= alpha_tilde <= 0.5):
        raise DataValidationError("alpha_tilde must be in [0, 0.5]")
    out = np.zeros(gaps.shape[0])
    m = int(math.ceil(alpha_tilde * gaps.shape[0] - 1e-12))
    if m > 0:
        top = np.argsort(-gaps, kind="stable")[:m]
        out[top] = y_tilde_value
    return out


def _partition_rows(partition: LabelPartition, features: np.ndarray):
    n = features.shape[0]
    covered = partition.queried_indices.size + partition.unqueried_indices.size
    if covered != n:
        raise DataValidationError(
            f"partition covers {covered} rows, features have {n}"
        )


def soel_loss_and_grad(state: ScorerState, partition: LabelPartition,
                       train_features: np.ndarray):
    """Equal-averaged supervised + pseudo-labeled loss over Q and U."""
    _partition_rows(partition, train_features)
    n_q = partition.queried_indices.size
    n_u = partition.unqueried_indices.size
    if n_q == 0 or n_u == 0:
        raise DataValidationError(
            "the combined loss needs both queried and unqueried rows"
        )
    rows = np.concatenate([partition.queried_indices, partition.unqueried_indices])
    labels = np.concatenate([partition.queried_labels.astype(np.float64),
                             partition.pseudo_labels])
    weights = np.concatenate([np.full(n_q, 1.0 / n_q), np.full(n_u, 1.0 / n_u)])
    return weighted_loss_grad(state, train_features[rows], labels, weights)


def hybr3_weights(state: ScorerState, partition: LabelPartition,
                  train_features: np.ndarray):
    """Per-row weights from the distance gap to the queried class centers.

    d_i = 10 * c_d * (||phi - c0|| - ||phi - c1||) with c0/c1 the queried
    normal/abnormal embedding centroids and c_d = 1 / (max d - min d) over
    all rows; queried rows get 2*sigmoid(d), unqueried 2 - 2*sigmoid(d).
    Weights are treated as constants of the current state (re-derived per
    call, not differentiated through).
    """
    q_labels = partition.queried_labels
    q_idx = partition.queried_indices
    if not np.any(q_labels == 0) or not np.any(q_labels == 1):
        raise DegenerateCentersError(
            "the weighting needs at least one queried normal and one queried anomaly"
        )
    emb = embed_batch(state, train_features)
    c0 = emb[q_idx[q_labels == 0]].mean(axis=0)
    c1 = emb[q_idx[q_labels == 1]].mean(axis=0)
    gap = (np.sqrt(((emb - c0) ** 2).sum(axis=1))
           - np.sqrt(((emb - c1) ** 2).sum(axis=1)))
    spread = gap.max() - gap.min()
    d = np.zeros_like(gap) if spread == 0.0 else 10.0 * gap / spread
    sig = 1.0 / (1.0 + np.exp(-d))
    w_queried = 2.0 * sig[q_idx]
    w_unqueried = 2.0 - 2.0 * sig[partition.unqueried_indices]
    return w_queried, w_unqueried


def baseline_loss_and_grad(method: str, state: ScorerState,
                           partition: LabelPartition, train_features: np.ndarray):
    """Loss/gradient for the baseline training objectives."""
    _partition_rows(partition, train_features)
    n_q = partition.queried_indices.size
    n_u = partition.unqueried_indices.size
    y_q = partition.queried_labels.astype(np.float64)

    if method == "Pos1Loss":
        if n_q == 0:
            raise DataValidationError("Pos1Loss needs queried rows")
        rows = partition.queried_indices
        return weighted_loss_grad(
            state, train_features[rows], y_q, np.full(n_q, 1.0 / n_q))

    if method == "Rand1Loss":
        if n_q == 0 or n_u == 0:
            raise DataValidationError("Rand1Loss needs both queried and unqueried rows")
        rows = np.concatenate([partition.queried_indices, partition.unqueried_indices])
        labels = np.concatenate([y_q, np.zeros(n_u)])
        weights = np.concatenate([np.full(n_q, 1.0 / n_q), np.full(n_u, 1.0 / n_u)])
        return weighted_loss_grad(state, train_features[rows], labels, weights)

    if method == "Hybr3Loss":
        w_q, w_u = hybr3_weights(state, partition, train_features)
        n = n_q + n_u
        rows = np.concatenate([partition.queried_indices, partition.unqueried_indices])
        # anomalies are filtered out of the supervised part: weight (1 - y) * w
        weights = np.concatenate([w_q * (1.0 - y_q), w_u]) / n
        labels = np.zeros(rows.size)  # pure one-class terms on both groups
        return weighted_loss_grad(state, train_features[rows], labels, weights)

    raise DataValidationError(f"unknown baseline method {method!r}")


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class PreparedRun:
    """Result of warmup + query selection, awaiting labels for the queries."""

    config: TrainConfig
    state: ScorerState
    query_indices: np.ndarray
    selection_probs: np.ndarray | None
    train_scores: np.ndarray
    embeddings: np.ndarray
    shuffle_rng: np.random.Generator
    warmup_losses: list


def _one_class_epoch(state, X, order, batch_size, lr, weight_per_row):
    losses = []
    for start in range(0, order.size, batch_size):
        rows = order[start: start + batch_size]
        loss, grads = weighted_loss_grad(
            state, X[rows], np.zeros(rows.size),
            np.full(rows.size, weight_per_row))
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite warmup loss {loss}")
        adam_step(state, grads, lr)
        losses.append(loss)
    return float(np.sum(losses))


def prepare_run(config: TrainConfig, split: SplitResult,
                plan: QueryPlan | None) -> PreparedRun:
    """Warmup one-class training, then budgeted query selection."""
    X = split.train.features
    if plan is not None and plan.budget > X.shape[0]:
        raise DataValidationError(
            f"budget {plan.budget} exceeds train size {X.shape[0]}")
    init_ss, shuffle_ss = np.random.SeedSequence(config.seed).spawn(2)
    state = init_scorer(X.shape[1], config.hidden_dims, config.embed_dim,
                        seed=init_ss, warmup_batch=X)
    rng = np.random.default_rng(shuffle_ss)
    n = X.shape[0]
    warmup_losses = []
    for _ in range(config.warmup_epochs):
        order = rng.permutation(n)
        warmup_losses.append(_one_class_epoch(
            state, X, order, config.batch_size, config.learning_rate, 1.0 / n))

    if plan is None:
        return PreparedRun(config, state, np.array([], dtype=np.int64), None,
                           score_batch(state, X), embed_batch(state, X),
                           rng, warmup_losses)

    embeddings = embed_batch(state, X)
    train_scores = score_batch(state, X)
    qs = select_queries(plan, embeddings, train_scores)
    return PreparedRun(config, state, qs.indices, qs.selection_probs,
                       train_scores, embeddings, rng, warmup_losses)


def _resolve_alpha(config, prepared, labels, oracle, report):
    if config.alpha_source == "fixed":
        report.alpha_hat = float(config.alpha_value)
    elif config.alpha_source == "oracle":
        if oracle is None or not hasattr(oracle, "true_ratio"):
            raise DataValidationError(
                "alpha_source='oracle' needs an oracle exposing true_ratio()")
        report.alpha_hat = float(oracle.true_ratio())
    else:
        est = estimate_alpha(prepared.train_scores,
                             prepared.train_scores[prepared.query_indices],
                             labels)
        report.alpha_hat = est.alpha_hat
        report.alpha_raw = est.raw_alpha
        report.alpha_fallback = est.fallback


def finish_run(prepared: PreparedRun, labels, split: SplitResult,
               oracle=None):
    """Ratio estimation and fine-tuning once the queried labels are known."""
    config = prepared.config
    X = split.train.features
    n = X.shape[0]
    state = prepared.state
    rng = prepared.shuffle_rng
    report = TrainReport()
    t0 = time.perf_counter()

    q_idx = prepared.query_indices
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != q_idx.shape:
        raise DataValidationError("one label per queried index is required")
    u_mask = np.ones(n, dtype=bool)
    u_mask[q_idx] = False
    u_idx = np.flatnonzero(u_mask)
    partition = LabelPartition(
        queried_indices=q_idx,
        queried_labels=labels,
        unqueried_indices=u_idx,
        pseudo_labels=np.zeros(u_idx.size),
        y_tilde_value=config.y_tilde_value,
    )

    unsupervised = q_idx.size == 0
    if not unsupervised:
        _resolve_alpha(config, prepared, labels, oracle, report)
        if u_idx.size >= 1:
            report.alpha_tilde = residual_alpha(
                report.alpha_hat, n, labels, u_idx.size)
        else:
            report.alpha_tilde = 0.0

    stalled = 0
    prev_loss = None
    for epoch in range(config.epochs):
        if config.method == "SOEL" and not unsupervised and u_idx.size > 0:
            gaps = loss_gaps(state, X[u_idx])
            new_pseudo = assign_pseudo_labels(
                gaps, report.alpha_tilde, config.y_tilde_value)
            report.flip_counts.append(
                int(np.sum((new_pseudo > 0) != (partition.pseudo_labels > 0))))
            partition.pseudo_labels = new_pseudo

        epoch_loss = _run_epoch(state, X, partition, config, rng, unsupervised)
        report.epoch_losses.append(epoch_loss)

        if prev_loss is not None:
            rel = (prev_loss - epoch_loss) / max(abs(prev_loss), 1e-30)
            stalled = stalled + 1 if rel < EARLY_STOP_REL_TOL else 0
            if stalled >= EARLY_STOP_PATIENCE:
                report.stopped_early_at = epoch + 1
                break
        prev_loss = epoch_loss

    report.wall_clock_s = time.perf_counter() - t0
    return state, partition, report


def _run_epoch(state, X, partition, config, rng, unsupervised):
    q_idx = partition.queried_indices
    u_idx = partition.unqueried_indices
    n_q, n_u = q_idx.size, u_idx.size
    step_losses = []

    if unsupervised:
        order = rng.permutation(X.shape[0])
        return _one_class_epoch(state, X, order, config.batch_size,
                                config.learning_rate, 1.0 / X.shape[0])

    if config.method == "Pos1Loss" or n_u == 0:
        # labeled-only objective (also the saturation case Q = everything)
        order = rng.permutation(n_q)
        for start in range(0, n_q, config.batch_size):
            pick = order[start: start + config.batch_size]
            loss, grads = weighted_loss_grad(
                state, X[q_idx[pick]],
                partition.queried_labels[pick].astype(np.float64),
                np.full(pick.size, 1.0 / n_q))
            _checked_step(state, loss, grads, config.learning_rate)
            step_losses.append(loss)
        return float(np.sum(step_losses))

    if config.method == "Hybr3Loss":
        w_q, w_u = hybr3_weights(state, partition, X)
        y_q = partition.queried_labels.astype(np.float64)
        q_weights = w_q * (1.0 - y_q) / (n_q + n_u)
        u_weights = w_u / (n_q + n_u)
        q_labels = np.zeros(n_q)
        u_labels_all = np.zeros(n_u)
    else:  # SOEL and Rand1Loss share the two-group shape
        q_weights = np.full(n_q, 1.0 / n_q)
        u_weights = np.full(n_u, 1.0 / n_u)
        q_labels = partition.queried_labels.astype(np.float64)
        u_labels_all = (partition.pseudo_labels if config.method == "SOEL"
                        else np.zeros(n_u))

    order = rng.permutation(n_u)
    for start in range(0, n_u, config.batch_size):
        pick = order[start: start + config.batch_size]
        rows = np.concatenate([q_idx, u_idx[pick]])
        labels = np.concatenate([q_labels, u_labels_all[pick]])
        weights = np.concatenate([q_weights, u_weights[pick]])
        loss, grads = weighted_loss_grad(state, X[rows], labels, weights)
        _checked_step(state, loss, grads, config.learning_rate)
        step_losses.append(loss)
    return float(np.sum(step_losses))


def _checked_step(state, loss, grads, lr):
    if not np.isfinite(loss):
        raise NumericalError(
            f"non-finite training loss {loss} at step {state.step_count + 1}")
    adam_step(state, grads, lr)


def train(config: TrainConfig, split: SplitResult, plan: QueryPlan | None,
          oracle):
    """Full pipeline: warmup, query, oracle labels, ratio estimate, fine-tune.

    `oracle` answers queried train indices (an object with .answer(i) or a
    plain callable). Pass plan=None for the unsupervised zero-budget run.
    """
    prepared = prepare_run(config, split, plan)
    answer = oracle.answer if hasattr(oracle, "answer") else oracle
    labels = np.array([answer(int(i)) for i in prepared.query_indices],
                      dtype=np.int64)
    return finish_run(prepared, labels, split, oracle=oracle)
