"""HTTP labeling service: sessions walk a human (or script) through the
queried samples, then estimation and fine-tuning run automatically.

Endpoints (JSON bodies, errors carry {code, message}):
    POST /sessions                  create; runs warmup + query selection
    GET  /sessions/{id}             status snapshot
    GET  /sessions/{id}/pending     queried items still awaiting a label
    POST /sessions/{id}/labels      submit labels; idempotent per index
    GET  /healthz

State machine: warming_up -> awaiting_labels -> estimating -> training ->
done; failed is reachable from anywhere. Sessions persist as JSON files
keyed by id, so submitted labels survive a restart; the deterministic
warmup/selection stage is recomputed on demand.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .data import (
    ContaminationSpec,
    load_features,
    make_tabular_split,
    make_toy_split,
)
from .errors import SoelkitError
from .evaluation import auc
from .querying import QueryPlan
from .scorer import score_batch
from .training import TrainConfig, finish_run, prepare_run

BACKGROUND_SAMPLE_LIMIT = 400


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)


def _build_split(dataset_cfg: dict, seed: int):
    kind = dataset_cfg.get("kind", "toy")
    if kind == "toy":
        return make_toy_split(dataset_cfg.get("n_normal", 90),
                              dataset_cfg.get("n_anomaly", 10),
                              dataset_cfg.get("geometry", "blob-ring"), seed)
    if kind == "csv":
        ds = load_features(dataset_cfg["path"], dataset_cfg.get("label_column"))
        spec = ContaminationSpec(dataset_cfg.get("contamination_ratio", 0.1),
                                 seed=seed)
        return make_tabular_split(ds, spec)
    raise ServiceError(422, "bad_dataset", f"unsupported dataset kind {kind!r}")


class Session:
    """One labeling round; all mutation happens under the per-session lock."""

    def __init__(self, session_id: str, dataset_name: str, dataset_cfg: dict,
                 plan_cfg: dict, train_cfg: dict, seed: int, store: Path):
        self.id = session_id
        self.dataset_name = dataset_name
        self.dataset_cfg = dataset_cfg
        self.plan_cfg = plan_cfg
        self.train_cfg = train_cfg
        self.seed = seed
        self.store = store
        self.state = "warming_up"
        self.received: dict[int, int] = {}
        self.result: dict | None = None
        self.error: str | None = None
        self.created_at = time.time()
        self.updated_at = self.created_at
        self.lock = threading.Lock()
        self._split = None
        self._prepared = None
        self._advance_started = False

    # -- deterministic pipeline pieces -------------------------------------

    def split(self):
        if self._split is None:
            self._split = _build_split(self.dataset_cfg, self.seed)
        return self._split

    def plan(self) -> QueryPlan:
        p = self.plan_cfg
        return QueryPlan(strategy=p.get("strategy", "Diverse"),
                         budget=p.get("budget", 20),
                         tau=p.get("tau", 0.01),
                         beta=p.get("beta", 1.0),
                         k_neighbors=p.get("k_neighbors"),
                         assumed_ratio=p.get("assumed_ratio"),
                         seed=self.seed)

    def train_config(self) -> TrainConfig:
        t = self.train_cfg
        return TrainConfig(method=t.get("method", "SOEL"),
                           epochs=t.get("epochs", 30),
                           batch_size=t.get("batch_size", 32),
                           learning_rate=t.get("learning_rate", 1e-3),
                           y_tilde_value=t.get("y_tilde_value", 0.5),
                           alpha_source=t.get("alpha_source", "estimated"),
                           alpha_value=t.get("alpha_value"),
                           warmup_epochs=t.get("warmup_epochs", 1),
                           hidden_dims=tuple(t.get("hidden_dims", (64, 32))),
                           embed_dim=t.get("embed_dim", 16),
                           seed=self.seed)

    def prepared(self):
        if self._prepared is None:
            self._prepared = prepare_run(self.train_config(), self.split(),
                                         self.plan())
        return self._prepared

    # -- persistence --------------------------------------------------------

    def persist(self):
        self.updated_at = time.time()
        blob = {
            "id": self.id,
            "dataset": self.dataset_name,
            "dataset_cfg": self.dataset_cfg,
            "plan": self.plan_cfg,
            "train": self.train_cfg,
            "seed": self.seed,
            "state": self.state,
            "received": {str(k): v for k, v in self.received.items()},
            "result": self.result,
            "error": self.error,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }
        self.store.mkdir(parents=True, exist_ok=True)
        (self.store / f"{self.id}.json").write_text(json.dumps(blob))

    @classmethod
    def restore(cls, blob: dict, store: Path) -> "Session":
        s = cls(blob["id"], blob["dataset"], blob["dataset_cfg"], blob["plan"],
                blob["train"], blob["seed"], store)
        s.state = blob["state"]
        s.received = {int(k): v for k, v in blob["received"].items()}
        s.result = blob["result"]
        s.error = blob["error"]
        s.created_at = blob["created_at"]
        s.updated_at = blob["updated_at"]
        return s

    def resume(self):
        """Pick up where a restart left off; everything recomputes
        deterministically from the stored config + labels."""
        if self.state == "warming_up":
            self.start_warmup()
        elif self.state in ("estimating", "training"):
            self._advance_started = True
            threading.Thread(target=self._finish, daemon=True).start()

    # -- views ---------------------------------------------------------------

    def pending_indices(self):
        q = [int(i) for i in self.prepared().query_indices]
        return [i for i in q if i not in self.received]

    def snapshot(self) -> dict:
        snap = {
            "id": self.id,
            "dataset": self.dataset_name,
            "state": self.state,
            "budget": self.plan_cfg.get("budget", 20),
            "received_count": len(self.received),
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "result": self.result,
            "error": self.error,
        }
        if self.state == "awaiting_labels":
            snap["pending_count"] = len(self.pending_indices())
            snap["scatter_background"] = self._background_points()
        else:
            snap["pending_count"] = (self.plan_cfg.get("budget", 20)
                                     - len(self.received))
        return snap

    def _background_points(self):
        feats = self.split().train.features
        if feats.shape[1] == 2:
            pts = feats
        else:
            pts = self.prepared().embeddings[:, :2]
        step = max(1, pts.shape[0] // BACKGROUND_SAMPLE_LIMIT)
        return pts[::step].tolist()

    def pending_items(self):
        feats = self.split().train.features
        two_d = feats.shape[1] == 2
        emb = None if two_d else self.prepared().embeddings
        items = []
        for i in self.pending_indices():
            coords = feats[i].tolist() if two_d else emb[i, :2].tolist()
            items.append({
                "index": i,
                "coords": coords,
                "projected": not two_d,
                "features": feats[i].tolist()[:16],
                "score": float(self.prepared().train_scores[i]),
            })
        return items

    # -- state transitions ----------------------------------------------------

    def start_warmup(self):
        def _work():
            try:
                self.prepared()
                with self.lock:
                    self.state = "awaiting_labels"
                    self.persist()
            except Exception as exc:
                with self.lock:
                    self.state = "failed"
                    self.error = repr(exc)
                    self.persist()

        threading.Thread(target=_work, daemon=True).start()

    def submit(self, batch):
        """Apply a label batch; returns counts. Triggers training when the
        last pending label arrives (exactly once)."""
        advance = False
        with self.lock:
            if self.state != "awaiting_labels":
                raise ServiceError(409, "state_conflict",
                                   f"session is {self.state}, not awaiting_labels")
            queried = {int(i) for i in self.prepared().query_indices}
            for item in batch:
                idx, label = int(item["index"]), item["label"]
                if label not in (0, 1):
                    raise ServiceError(422, "bad_label",
                                       f"label must be 0 or 1, got {label!r}")
                if idx not in queried:
                    raise ServiceError(409, "not_pending",
                                       f"index {idx} was never queried")
                if idx in self.received:
                    if self.received[idx] != label:
                        raise ServiceError(409, "conflict",
                                           f"index {idx} already labeled "
                                           f"{self.received[idx]}")
                    continue  # identical re-submission is a no-op
                self.received[idx] = int(label)
            pending = [i for i in queried if i not in self.received]
            if not pending and not self._advance_started:
                self._advance_started = True
                self.state = "estimating"
                advance = True
            self.persist()
        if advance:
            threading.Thread(target=self._finish, daemon=True).start()
        return {"pending": len(pending), "received": len(self.received)}

    def _finish(self):
        try:
            prepared = self.prepared()
            labels = [self.received[int(i)] for i in prepared.query_indices]
            with self.lock:
                self.state = "training"
                self.persist()
            state, _partition, report = finish_run(
                prepared, labels, self.split())
            test = self.split().test
            test_auc = auc(score_batch(state, test.features), test.labels)
            with self.lock:
                self.result = {
                    "alpha_hat": report.alpha_hat,
                    "alpha_tilde": report.alpha_tilde,
                    "test_auc": test_auc,
                    "epochs_run": len(report.epoch_losses),
                }
                self.state = "done"
                self.persist()
        except Exception as exc:
            with self.lock:
                self.state = "failed"
                self.error = repr(exc)
                self.persist()


def create_app(config: dict | None = None, session_dir: str | None = None) -> FastAPI:
    config = config or {}
    datasets = config.get("datasets", {
        "toy": {"kind": "toy", "n_normal": 90, "n_anomaly": 10,
                "geometry": "blob-ring"},
    })
    store = Path(session_dir or config.get("session_dir", "./sessions"))
    app = FastAPI(title="soelkit labeling service")
    sessions: dict[str, Session] = {}

    if store.exists():
        for f in sorted(store.glob("*.json")):
            try:
                s = Session.restore(json.loads(f.read_text()), store)
                sessions[s.id] = s
                s.resume()
            except (KeyError, json.JSONDecodeError):
                continue

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(SoelkitError)
    async def _domain_error(_req: Request, exc: SoelkitError):
        return JSONResponse(status_code=422,
                            content={"code": "validation", "message": str(exc)})

    def _get(session_id: str) -> Session:
        if session_id not in sessions:
            raise ServiceError(404, "unknown_session",
                               f"no session {session_id!r}")
        return sessions[session_id]

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    async def create_session(body: dict):
        name = body.get("dataset", "toy")
        if name not in datasets:
            raise ServiceError(404, "unknown_dataset",
                               f"dataset {name!r} is not loaded")
        plan_cfg = body.get("plan", {})
        budget = plan_cfg.get("budget", 20)
        dataset_cfg = datasets[name]
        # cheap capacity pre-check against the would-be train pool
        probe = _build_split(dataset_cfg, body.get("seed", 0))
        if budget < 1 or budget > probe.train.n:
            raise ServiceError(422, "bad_budget",
                               f"budget {budget} not in [1, {probe.train.n}]")
        session = Session(uuid.uuid4().hex[:12], name, dataset_cfg, plan_cfg,
                          body.get("train", {}), body.get("seed", 0), store)
        sessions[session.id] = session
        session.persist()
        session.start_warmup()
        return session.snapshot()

    @app.get("/sessions/{session_id}")
    async def get_status(session_id: str):
        return _get(session_id).snapshot()

    @app.get("/sessions/{session_id}/pending")
    async def get_pending(session_id: str):
        session = _get(session_id)
        if session.state != "awaiting_labels":
            raise ServiceError(409, "state_conflict",
                               f"session is {session.state}, not awaiting_labels")
        return session.pending_items()

    @app.post("/sessions/{session_id}/labels")
    async def submit_labels(session_id: str, body: dict):
        labels = body.get("labels")
        if not isinstance(labels, list) or not labels:
            raise ServiceError(422, "bad_body",
                               "body must carry a non-empty 'labels' list")
        return _get(session_id).submit(labels)

    return app
