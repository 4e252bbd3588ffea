"""HTTP annotation service: one live interactive experiment session.

The experiment engine runs on a worker thread; its interactive annotator
blocks on the session object until labels arrive through the API. Only one
query batch is outstanding at a time, and label submission is rejected
while the engine is training. Aborting returns a resume token; resuming
replays the recorded label history deterministically before handing
control back to the human.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import asdict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles

from .active import Annotator, SessionAborted
from .experiment import ExperimentConfig, RunHooks, load_dataset, run_experiment
from .graph import Graph


def _feature_summary(g: Graph, vertex: int, top: int = 10) -> list[list[float]]:
    row = g.features[vertex]
    nz = np.nonzero(row)[0]
    order = nz[np.argsort(-np.abs(row[nz]), kind="stable")][:top]
    return [[int(i), float(row[i])] for i in order]


class InteractiveSession(RunHooks):
    """Blocking request/response bridge plus live state for the API."""

    def __init__(self, cfg: ExperimentConfig, replay: list[dict] | None = None):
        self.cfg = cfg
        self.graph = load_dataset(cfg)
        self._cond = threading.Condition()
        self.status = "idle"
        self.error: str | None = None
        self.current_round = 0
        self.records: list = []
        self.query_batch: list[int] | None = None
        self._pending: dict[int, int] | None = None
        self._aborted = False
        self.label_history: list[dict[str, str]] = []
        self.known_labels: dict[int, str] = {}
        if self.graph.num_classes is not None:
            self.class_names = [str(c) for c in range(self.graph.num_classes)]
        else:
            self.class_names = []
        self._replay = list(replay or [])
        self._thread: threading.Thread | None = None

    # -- engine side --------------------------------------------------------

    @property
    def allow_new_class(self) -> bool:
        return self.cfg.setting == "unknown_k"

    @property
    def budget_used(self) -> int:
        return len(self.known_labels)

    def start(self) -> None:
        annotator = Annotator(kind="interactive", session=self)
        self._thread = threading.Thread(
            target=self._run, args=(annotator,), daemon=True, name="graphfew-engine"
        )
        self._thread.start()

    def _run(self, annotator: Annotator) -> None:
        try:
            run_experiment(self.cfg, annotator=annotator, hooks=self, graph=self.graph)
            with self._cond:
                self.status = "aborted" if self._aborted else "done"
        except Exception as exc:  # surfaced through /session/state
            with self._cond:
                self.error = f"{type(exc).__name__}: {exc}"
                self.status = "error"

    def request_labels(self, vertices: list[int]) -> dict[int, int]:
        with self._cond:
            if self._aborted:
                raise SessionAborted()
            if self._replay:
                entry = self._replay.pop(0)
                if sorted(int(k) for k in entry) != sorted(vertices):
                    raise SessionAborted("resume history diverged from the replayed run")
                return self._accept({int(k): v for k, v in entry.items()})
            self.query_batch = list(vertices)
            self.status = "awaiting_labels"
            self._cond.notify_all()
            while self._pending is None and not self._aborted:
                self._cond.wait()
            if self._aborted:
                raise SessionAborted()
            labels = self._pending
            self._pending = None
            self.query_batch = None
            self.status = "training"
            return labels

    def _accept(self, named: dict[int, str]) -> dict[int, int]:
        mapped: dict[int, int] = {}
        for vertex, name in named.items():
            name = str(name)
            if name not in self.class_names:
                if not self.allow_new_class:
                    raise ValueError(f"unknown class {name!r}")
                self.class_names.append(name)
            mapped[vertex] = self.class_names.index(name)
            self.known_labels[vertex] = name
        self.label_history.append({str(v): n for v, n in named.items()})
        return mapped

    # -- RunHooks -----------------------------------------------------------

    def on_round(self, repeat: int, round_index: int) -> None:
        with self._cond:
            self.current_round = round_index

    def on_training(self, active: bool) -> None:
        with self._cond:
            if self.status not in ("done", "error", "aborted"):
                self.status = "training" if active else self.status

    def on_record(self, record) -> None:
        with self._cond:
            self.records.append(record)

    def on_model_output(self, output) -> None:
        with self._cond:
            self.model_output = output

    # -- HTTP side ----------------------------------------------------------

    def state_view(self) -> dict:
        with self._cond:
            budget = self.cfg.budget
            if budget is None and self.graph.num_classes is not None:
                budget = self.graph.num_classes * self.cfg.rounds * self.cfg.per_round_quota
            return {
                "status": self.status,
                "budget_used": self.budget_used,
                "budget_total": budget,
                "current_round": self.current_round,
                "error": self.error,
            }

    def query_view(self) -> dict:
        with self._cond:
            if self.status != "awaiting_labels" or self.query_batch is None:
                raise HTTPException(status_code=409, detail="no query batch is awaiting labels")
            out = getattr(self, "model_output", None)
            cards = []
            for v in self.query_batch:
                neighbors = [
                    {"id": int(u), "label": self.known_labels.get(int(u))}
                    for u in self.graph.neighbors(v)
                ]
                dist = [] if out is None else [float(x) for x in out.logits[v]]
                cards.append(
                    {
                        "vertex": int(v),
                        "top_features": _feature_summary(self.graph, v),
                        "neighbors": neighbors,
                        "class_distribution": dist,
                    }
                )
            return {
                "vertices": cards,
                "known_classes": list(self.class_names),
                "allow_new_class": self.allow_new_class,
            }

    def submit_labels(self, named: dict[str, str]) -> None:
        with self._cond:
            if self.status != "awaiting_labels" or self.query_batch is None:
                raise HTTPException(
                    status_code=409,
                    detail=f"labels not accepted while status is {self.status!r}",
                )
            try:
                keys = {int(k) for k in named}
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=f"vertex ids must be integers: {exc}")
            if keys != set(self.query_batch):
                raise HTTPException(
                    status_code=422,
                    detail=f"labels must cover exactly the queried vertices {sorted(self.query_batch)}",
                )
            try:
                self._pending = self._accept({int(k): v for k, v in named.items()})
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            self._cond.notify_all()

    def abort(self) -> None:
        with self._cond:
            self._aborted = True
            self._cond.notify_all()

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)


def _record_view(record) -> dict:
    doc = asdict(record)
    return doc


def create_app(static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="graphfew annotation service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    if static_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend"
        static_dir = candidate if (candidate / "index.html").exists() else None
    state: dict = {"session": None, "resumables": {}}

    def current() -> InteractiveSession:
        session = state["session"]
        if session is None:
            raise HTTPException(status_code=404, detail="no active session")
        return session

    @app.post("/session")
    def create_session(body: dict):
        session = state["session"]
        if session is not None and session.status not in ("done", "error", "aborted"):
            raise HTTPException(status_code=409, detail="a session is already running")
        replay = None
        if "resume_token" in body:
            stored = state["resumables"].pop(body["resume_token"], None)
            if stored is None:
                raise HTTPException(status_code=404, detail="unknown resume token")
            cfg_doc, replay = stored
        else:
            cfg_doc = dict(body.get("config", body))
        cfg_doc["annotator"] = "interactive"
        try:
            cfg = ExperimentConfig.from_dict(cfg_doc)
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session = InteractiveSession(cfg, replay=replay)
        state["session"] = session
        session.start()
        return {"session_id": id(session)}

    @app.get("/session/state")
    def session_state():
        session = state["session"]
        if session is None:
            return {
                "status": "idle",
                "budget_used": 0,
                "budget_total": None,
                "current_round": 0,
                "error": None,
            }
        return session.state_view()

    @app.get("/session/query")
    def session_query():
        return current().query_view()

    @app.post("/session/labels")
    def session_labels(body: dict):
        named = body.get("labels", body)
        if not isinstance(named, dict):
            raise HTTPException(status_code=422, detail="expected a vertex->label mapping")
        current().submit_labels(named)
        return {"accepted": len(named)}

    @app.get("/session/metrics")
    def session_metrics():
        return {"records": [_record_view(r) for r in current().records]}

    @app.delete("/session")
    def session_delete():
        session = current()
        token = secrets.token_hex(8)
        state["resumables"][token] = (session.cfg.to_dict(), list(session.label_history))
        session.abort()
        session.join(timeout=30)
        state["session"] = None
        return {"resume_token": token}

    # The browser UI, when present, is served as a fallback after the API routes.
    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
