"""Metrics against brute-force oracles, the ranking check, oracle, and sweeps."""

import numpy as np
import pytest

import soelkit as sk
from soelkit.errors import DataValidationError
from soelkit.evaluation import MethodSpec, OracleHandle, run_experiment


def brute_force_auc(scores, labels):
    """O(n0*n1) pairwise definition with half credit for ties."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for a in pos:
        for b in neg:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (pos.size * neg.size)


class TestAuc:
    def test_perfect_separation(self):
        assert sk.auc([1.0, 2.0, 9.0, 8.0], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert sk.auc([3.0, 3.0, 3.0, 3.0], [0, 1, 0, 1]) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(DataValidationError):
            sk.auc([1.0, 2.0], [1, 1])

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_bruteforce_with_ties(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 200))
        scores = rng.choice(np.round(rng.normal(size=30), 2), size=n)
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert sk.auc(scores, labels) == pytest.approx(
            brute_force_auc(scores, labels), abs=1e-12)

    def test_invariant_under_monotone_transforms(self):
        rng = np.random.default_rng(3)
        scores = rng.normal(size=80)
        labels = rng.integers(0, 2, 80)
        labels[0], labels[1] = 0, 1
        base = sk.auc(scores, labels)
        assert sk.auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
        assert sk.auc(3.0 * scores + 7.0, labels) == pytest.approx(base, abs=1e-12)


class TestF1:
    def test_perfect(self):
        scores = np.array([0.1, 0.2, 0.9, 0.8])
        labels = np.array([0, 0, 1, 1])
        assert sk.f1_at_ratio(scores, labels, 0.5) == 1.0

    def test_all_wrong(self):
        scores = np.array([0.9, 0.8, 0.1, 0.2])
        labels = np.array([0, 0, 1, 1])
        assert sk.f1_at_ratio(scores, labels, 0.5) == 0.0

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_confusion_matrix(self, seed):
        rng = np.random.default_rng(seed + 100)
        n = int(rng.integers(10, 300))
        scores = rng.normal(size=n)
        labels = rng.integers(0, 2, n)
        ratio = float(rng.uniform(0.05, 0.6))
        got = sk.f1_at_ratio(scores, labels, ratio)
        k = int(np.ceil(ratio * n))
        pred = np.zeros(n, int)
        pred[np.argsort(-scores, kind="stable")[:k]] = 1
        tp = np.sum((pred == 1) & (labels == 1))
        prec = tp / max(pred.sum(), 1)
        rec = tp / max(labels.sum(), 1)
        expect = 0.0 if tp == 0 else 2 * prec * rec / (prec + rec)
        assert got == pytest.approx(expect, abs=1e-12)

    def test_ratio_bounds(self):
        with pytest.raises(DataValidationError):
            sk.f1_at_ratio([1.0], [1], 1.5)


def hand_built_instance():
    emb = np.array([[0.0], [0.1], [1.0], [1.1]])
    labels = np.array([0, 0, 1, 1])
    scores = emb[:, 0].copy()
    q_idx = np.array([1, 2])
    return emb, labels, q_idx, scores


class TestRankingGeneralization:
    def test_hand_built_one_dimensional_instance(self):
        emb, labels, q_idx, scores = hand_built_instance()
        rep = sk.check_ranking_generalization(emb, labels, q_idx, scores)
        assert rep.delta == pytest.approx(0.1)
        assert rep.lambda_hat == pytest.approx(1.0)
        assert rep.margin == pytest.approx(0.9)
        assert rep.margin_ok and rep.ranking_ok
        assert rep.counterexamples == []

    def test_full_query_vacuous(self):
        emb, labels, _, scores = hand_built_instance()
        rep = sk.check_ranking_generalization(emb, labels, np.arange(4), scores)
        assert rep.ranking_ok is True

    def test_margin_violated_makes_no_claim(self):
        emb = np.array([[0.0], [0.1], [0.2], [0.3]])
        labels = np.array([0, 0, 1, 1])
        scores = np.array([0.0, 0.1, 0.11, 0.3])  # margin 0.01 < 2*delta*lam
        rep = sk.check_ranking_generalization(emb, labels, np.array([1, 2]), scores)
        assert not rep.margin_ok
        assert rep.ranking_ok is None
        assert "not applicable" in rep.status()


class TestOracle:
    def _handle(self):
        split = sk.make_toy_split(20, 4, seed=0)
        return OracleHandle(split), split

    def test_repeat_answers_identical(self):
        handle, _ = self._handle()
        a = handle.answer(3)
        b = handle.answer(3)
        assert a == b
        assert handle.distinct_queried == 1
        assert len(handle.query_log) == 2

    def test_distinct_count(self):
        handle, _ = self._handle()
        for i in range(5):
            handle.answer(i)
        assert handle.distinct_queried == 5

    def test_out_of_range(self):
        handle, _ = self._handle()
        with pytest.raises(LookupError):
            handle.answer(999)

    def test_true_ratio(self):
        handle, split = self._handle()
        assert handle.true_ratio() == pytest.approx(
            float(np.mean(split.train_hidden_labels)))


def small_experiment(n_seeds=1, methods=None, budgets=(5,)):
    return sk.ExperimentConfig(
        dataset=None,
        contamination=None,
        methods=methods or (MethodSpec("SOEL+Diverse", "Diverse", "SOEL"),),
        budgets=budgets,
        train=sk.TrainConfig(epochs=2, batch_size=16, hidden_dims=(8, 4),
                             embed_dim=4),
        n_seeds=n_seeds,
        metric="auc",
        toy={"n_normal": 40, "n_anomaly": 6},
        tau=0.1,
    )


class TestRunExperiment:
    def test_single_cell(self):
        res = run_experiment(small_experiment())
        assert len(res.rows) == 1
        assert res.rows[0]["metric"] == "auc"
        assert 0.0 <= res.rows[0]["value"] <= 1.0

    def test_deterministic_repeat(self):
        cfg = small_experiment(n_seeds=2)
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        assert a.rows == b.rows

    def test_aggregate_counts(self):
        cfg = small_experiment(n_seeds=3, budgets=(4, 8))
        res = run_experiment(cfg)
        agg = res.aggregate()
        assert len(agg) == 2
        assert all(row["n"] == 3 for row in agg)

    def test_cell_failure_recorded_not_fatal(self):
        cfg = small_experiment(n_seeds=1, budgets=(10_000,))
        res = run_experiment(cfg)
        assert res.rows == []
        assert len(res.errors) == 1

    def test_parallel_matches_serial(self):
        cfg = small_experiment(n_seeds=2, budgets=(4,))
        serial = run_experiment(cfg, jobs=1)
        parallel = run_experiment(cfg, jobs=2)
        assert sorted(serial.rows, key=str) == sorted(parallel.rows, key=str)
