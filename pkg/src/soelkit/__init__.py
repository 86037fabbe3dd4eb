"""Budgeted active anomaly detection toolkit.

Pipeline: train a one-class scorer on contaminated data, select a diverse
budgeted query set for expert labeling, estimate the contamination ratio
from the answers, and fine-tune with a semi-supervised outlier-exposure
loss. Includes baseline query/training strategies, a benchmark harness,
and an HTTP labeling service.
"""

from .data import (
    ContaminationSpec,
    Dataset,
    SplitResult,
    load_features,
    make_one_vs_rest_split,
    make_tabular_split,
    make_toy_split,
    synth_clusters,
    synth_toy,
)
from .scorer import (
    LossPair,
    ScorerState,
    adam_step,
    embed,
    embed_batch,
    init_scorer,
    loss_pair,
    score,
    score_batch,
    weighted_loss_grad,
)
from .querying import (
    QueryPlan,
    QuerySet,
    cover_radius,
    cover_radius_study,
    select_queries,
)
from .contamination import (
    AlphaEstimate,
    ScoreDensity,
    estimate_alpha,
    kde_fit,
    residual_alpha,
)
from .training import (
    LabelPartition,
    TrainConfig,
    TrainReport,
    assign_pseudo_labels,
    baseline_loss_and_grad,
    soel_loss_and_grad,
    train,
)
from .evaluation import (
    ExperimentConfig,
    ExperimentResult,
    MethodSpec,
    OracleHandle,
    auc,
    check_ranking_generalization,
    f1_at_ratio,
    run_experiment,
)

__version__ = "0.1.0"
