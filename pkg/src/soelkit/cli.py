"""Command-line front door.

Subcommands: split, train, sweep, cover-study, estimate-alpha, check-thm1,
serve. Every subcommand accepts --seed, --config <json>, --out <path>.
Exit codes: 0 success, 1 validation error, 2 runtime failure.

Configs are JSON; the resolved configuration (defaults filled in) is
embedded in every output record for provenance. Output files never carry
timestamps or timings, so identical seed + config reproduces them byte
for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import scorer as scorer_mod
from .contamination import estimate_alpha
from .errors import SoelkitError
from .evaluation import (
    ExperimentConfig,
    MethodSpec,
    OracleHandle,
    auc,
    check_ranking_generalization,
    f1_at_ratio,
    run_experiment,
)
from .querying import QueryPlan, cover_radius_study
from .scorer import score_batch
from .training import TrainConfig, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _dump_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _build_dataset(cfg: dict, seed: int) -> data_mod.Dataset:
    kind = cfg.get("kind", "toy")
    if kind == "toy":
        return data_mod.synth_toy(cfg.get("n_normal", 90), cfg.get("n_anomaly", 10),
                                  cfg.get("geometry", "blob-ring"), seed)
    if kind == "clusters":
        return data_mod.synth_clusters(cfg.get("n_per_cluster", 100),
                                       cfg.get("n_clusters", 4),
                                       cfg.get("cluster_std", 0.6), seed)
    if kind == "csv":
        return data_mod.load_features(cfg["path"], cfg.get("label_column"))
    raise SoelkitError(f"unknown dataset kind {kind!r}")


def _build_split(config: dict, seed: int) -> data_mod.SplitResult:
    dcfg = config.get("dataset", {})
    scfg = config.get("split", {})
    if dcfg.get("kind", "toy") == "toy":
        return data_mod.make_toy_split(dcfg.get("n_normal", 90),
                                       dcfg.get("n_anomaly", 10),
                                       dcfg.get("geometry", "blob-ring"), seed)
    dataset = _build_dataset(dcfg, seed)
    spec = data_mod.ContaminationSpec(
        contamination_ratio=scfg.get("contamination_ratio", 0.1),
        seed=seed, normal_class=scfg.get("normal_class"))
    if scfg.get("mode") == "one_vs_rest":
        return data_mod.make_one_vs_rest_split(dataset, spec)
    return data_mod.make_tabular_split(dataset, spec)


def _build_plan(config: dict, seed: int) -> QueryPlan | None:
    pcfg = dict(config.get("plan", {}))
    budget = pcfg.get("budget", 20)
    if budget == 0:
        return None
    return QueryPlan(
        strategy=pcfg.get("strategy", "Diverse"),
        budget=budget,
        tau=pcfg.get("tau", 0.01),
        beta=pcfg.get("beta", 1.0),
        k_neighbors=pcfg.get("k_neighbors"),
        assumed_ratio=pcfg.get("assumed_ratio"),
        seed=seed,
    )


def _build_train_config(config: dict, seed: int) -> TrainConfig:
    tcfg = config.get("train", {})
    return TrainConfig(
        method=tcfg.get("method", "SOEL"),
        epochs=tcfg.get("epochs", 30),
        batch_size=tcfg.get("batch_size", 32),
        learning_rate=tcfg.get("learning_rate", 1e-3),
        y_tilde_value=tcfg.get("y_tilde_value", 0.5),
        alpha_source=tcfg.get("alpha_source", "estimated"),
        alpha_value=tcfg.get("alpha_value"),
        warmup_epochs=tcfg.get("warmup_epochs", 1),
        hidden_dims=tuple(tcfg.get("hidden_dims", (64, 32))),
        embed_dim=tcfg.get("embed_dim", 16),
        seed=seed,
    )


def _resolved(config, seed, extra=None):
    out = {"seed": seed, "config": config}
    if extra:
        out.update(extra)
    return out


def cmd_split(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    split = _build_split(config, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dim = split.train.feature_dim
    header = [f"f{i}" for i in range(dim)]
    _write_csv(out / "train.csv", header, split.train.features.tolist())
    _write_csv(out / "test.csv", header + ["label"],
               np.column_stack([split.test.features,
                                split.test.labels]).tolist())
    _dump_json(out / "meta.json", _resolved(config, seed, {
        "train_rows": split.train.n,
        "test_rows": split.test.n,
        "realized_train_ratio": split.realized_train_ratio,
    }))
    print(f"wrote split to {out} (train {split.train.n}, test {split.test.n})")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    split = _build_split(config, seed)
    plan = _build_plan(config, seed)
    tconf = _build_train_config(config, seed)
    oracle = OracleHandle(split)
    state, partition, report = train(tconf, split, plan, oracle)

    test_scores = score_batch(state, split.test.features)
    metrics = {"auc": auc(test_scores, split.test.labels)}
    ratio = float(np.mean(split.test.labels == 1))
    if 0.0 < ratio < 1.0:
        metrics["f1"] = f1_at_ratio(test_scores, split.test.labels, ratio)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = _resolved(config, seed, {
        "report": report.to_dict(deterministic=True),
        "metrics": metrics,
        "queried_indices": partition.queried_indices.tolist(),
        "queried_labels": partition.queried_labels.tolist(),
    })
    digest = hashlib.sha256(
        json.dumps(resolved, sort_keys=True).encode()).hexdigest()
    _dump_json(out / "report.json", resolved)
    _dump_json(out / "checkpoint.json", {
        "scorer": scorer_mod.state_to_dict(state),
        "partition": {
            "queried_indices": partition.queried_indices.tolist(),
            "queried_labels": partition.queried_labels.tolist(),
            "unqueried_indices": partition.unqueried_indices.tolist(),
            "pseudo_labels": partition.pseudo_labels.tolist(),
            "y_tilde_value": partition.y_tilde_value,
        },
        "config_digest": digest,
    })
    print(f"train done: metrics={metrics} alpha_hat={report.alpha_hat}")
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    swcfg = config.get("sweep", {})
    methods = tuple(
        MethodSpec(m["name"], m.get("strategy"), m.get("train_method", "SOEL"))
        for m in swcfg.get("methods",
                           [{"name": "SOEL+Diverse", "strategy": "Diverse"}]))
    dcfg = config.get("dataset", {})
    toy = None
    dataset = None
    contamination = None
    if dcfg.get("kind", "toy") == "toy":
        toy = {"n_normal": dcfg.get("n_normal", 90),
               "n_anomaly": dcfg.get("n_anomaly", 10),
               "geometry": dcfg.get("geometry", "blob-ring")}
    else:
        dataset = _build_dataset(dcfg, seed)
        scfg = config.get("split", {})
        contamination = data_mod.ContaminationSpec(
            contamination_ratio=scfg.get("contamination_ratio", 0.1),
            seed=seed, normal_class=scfg.get("normal_class"))
    exp = ExperimentConfig(
        dataset=dataset, contamination=contamination, methods=methods,
        budgets=tuple(swcfg.get("budgets", (20,))),
        train=_build_train_config(config, seed),
        n_seeds=swcfg.get("n_seeds", 5),
        metric=swcfg.get("metric", "auc"),
        base_seed=seed, toy=toy,
        tau=config.get("plan", {}).get("tau", 0.01),
        query_beta=config.get("plan", {}).get("beta", 1.0),
    )
    result = run_experiment(exp, jobs=args.jobs)
    out = Path(args.out)
    _write_csv(out, ["method", "budget", "seed", "metric", "value"],
               [[r["method"], r["budget"], r["seed"], r["metric"],
                 repr(r["value"])] for r in result.rows])
    _dump_json(out.with_suffix(out.suffix + ".summary.json"),
               _resolved(config, seed, {"aggregate": result.aggregate(),
                                        "errors": result.errors}))
    for row in result.aggregate():
        print(f"{row['method']:20s} K={row['budget']:<5d} "
              f"{exp.metric}={row['mean']:.4f} +/- {row['std']:.4f} (n={row['n']})")
    return 0


def cmd_cover_study(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    stcfg = config.get("study", {})
    dataset = _build_dataset(config.get("dataset", {"kind": "clusters"}), seed)
    rows = cover_radius_study(
        stcfg.get("strategies", ["Diverse", "Rand1", "Pos1"]),
        dataset,
        stcfg.get("budgets", [10, 20, 40]),
        repetitions=stcfg.get("repetitions", 50),
        seed=seed,
        tau=stcfg.get("tau", 0.5),
        assumed_ratio=stcfg.get("assumed_ratio"),
    )
    _write_csv(Path(args.out),
               ["strategy", "budget", "mean_delta", "std_delta", "n_valid"],
               [[r["strategy"], r["budget"], repr(r["mean_delta"]),
                 repr(r["std_delta"]), r["n_valid"]] for r in rows])
    for r in rows:
        print(f"{r['strategy']:8s} K={r['budget']:<5d} "
              f"delta={r['mean_delta']:.4f} +/- {r['std_delta']:.4f} "
              f"(n={r['n_valid']})")
    return 0


def _scores_from(cfg: dict, key: str):
    inline = cfg.get(key)
    if inline is not None:
        return np.asarray(inline, dtype=np.float64)
    path = cfg.get(key + "_csv")
    if path is None:
        raise SoelkitError(f"estimate-alpha config needs {key} or {key}_csv")
    return np.loadtxt(path, delimiter=",", skiprows=1)


def cmd_estimate_alpha(args) -> int:
    config = _load_config(args.config)
    acfg = config.get("alpha", config)
    train_scores = _scores_from(acfg, "train_scores")
    query_scores = _scores_from(acfg, "query_scores")
    query_labels = np.asarray(acfg["query_labels"], dtype=np.float64)
    est = estimate_alpha(train_scores, query_scores, query_labels)
    print(f"alpha_hat = {est.alpha_hat}")
    if args.out:
        _dump_json(Path(args.out), est.to_dict())
    return 0


def cmd_check_thm1(args) -> int:
    config = _load_config(args.config)
    tcfg = config.get("thm1")
    if tcfg is None:
        # built-in 1-D demonstration instance: scores are the coordinates
        tcfg = {
            "embeddings": [[0.0], [0.1], [1.0], [1.1]],
            "labels": [0, 0, 1, 1],
            "query_indices": [1, 2],
            "scores": [0.0, 0.1, 1.0, 1.1],
        }
    report = check_ranking_generalization(
        np.asarray(tcfg["embeddings"], dtype=np.float64),
        np.asarray(tcfg["labels"]),
        np.asarray(tcfg["query_indices"], dtype=np.int64),
        np.asarray(tcfg["scores"], dtype=np.float64),
        lipschitz_estimate=tcfg.get("lipschitz_estimate"),
    )
    print(f"delta={report.delta:.6g} lambda_hat={report.lambda_hat:.6g} "
          f"margin={report.margin:.6g}")
    print(f"margin_ok={str(report.margin_ok).lower()} "
          f"ranking_ok={str(report.ranking_ok).lower()}")
    if args.out:
        _dump_json(Path(args.out), {
            "delta": report.delta, "lambda_hat": report.lambda_hat,
            "margin": report.margin, "margin_ok": report.margin_ok,
            "ranking_ok": report.ranking_ok,
            "counterexamples": report.counterexamples,
        })
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = _load_config(args.config)
    app = create_app(config, session_dir=args.out)
    uvicorn.run(app, host=config.get("host", "127.0.0.1"),
                port=config.get("port", 8765), log_level="warning")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="soelkit",
                     description="budgeted active anomaly detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, jobs=False, out_required=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--out", type=str, required=out_required)
        if jobs:
            p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(fn=fn)
        return p

    add("split", cmd_split, "build a contaminated train/test split")
    add("train", cmd_train, "single training run")
    add("sweep", cmd_sweep, "multi-seed method x budget experiment", jobs=True)
    add("cover-study", cmd_cover_study, "cover radius Monte-Carlo table")
    add("estimate-alpha", cmd_estimate_alpha,
        "contamination estimate from provided scores/labels", out_required=False)
    add("check-thm1", cmd_check_thm1,
        "cover-margin ranking generalization check", out_required=False)
    add("serve", cmd_serve, "run the labeling HTTP service", out_required=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except SoelkitError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        sys.stderr.write(f"error: bad input: {exc!r}\n")
        return 1
    except Exception as exc:  # runtime failure
        sys.stderr.write(f"runtime failure: {exc!r}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
