"""HTTP service exposing a loaded checkpoint for interactive chat and
inspection: session management, the full per-utterance pipeline, and the
model metadata the web client needs for labeling.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import RedirectResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import corpus as cp
from .analysis import _traced_teacher
from .decoding import respond
from .model import GenerationModel, TurnData, match_bin
from .numerics import Rng
from .tracker import TrackerModel, belief_vectors, summarize

IDLE_SECONDS = 30 * 60


@dataclass
class Bundle:
    model: GenerationModel
    trackers: TrackerModel
    database: cp.Database

    @property
    def ontology(self) -> cp.Ontology:
        return self.model.ontology

    @classmethod
    def load(cls, checkpoint_path, trackers_path, database_path) -> "Bundle":
        return cls(model=GenerationModel.load(checkpoint_path),
                   trackers=TrackerModel.load(trackers_path),
                   database=cp.load_database(database_path))


@dataclass
class Session:
    id: str
    rng: Rng
    user_turns: list[list[str]] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    pointer: str | None = None
    last_access: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)


class UtteranceIn(BaseModel):
    text: str


def _belief_summary(bundle: Bundle, belief) -> dict:
    ontology = bundle.ontology
    summ = summarize(belief, ontology)
    informable = {}
    for slot in ontology.informable_slots:
        vec = summ["informable"][slot]
        informable[slot] = {"values": float(vec[0]),
                            "dontcare": float(vec[1]),
                            "none": float(vec[2])}
    return {"informable": informable, "requestable": summ["requestable"]}


def create_app(bundle: Bundle | None, base_seed: int = 0,
               ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="snapdial")
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    counter = {"n": 0}

    def evict(now: float):
        stale = [sid for sid, s in sessions.items()
                 if now - s.last_access > IDLE_SECONDS]
        for sid in stale:
            sessions.pop(sid, None)

    def get_session(sid: str) -> Session:
        with registry_lock:
            evict(time.monotonic())
            sess = sessions.get(sid)
        if sess is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown session {sid}")
        sess.last_access = time.monotonic()
        return sess

    @app.post("/session")
    def create_session():
        if bundle is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded")
        with registry_lock:
            evict(time.monotonic())
            sid = uuid.uuid4().hex
            sessions[sid] = Session(id=sid,
                                    rng=Rng(base_seed, key=(counter["n"],)))
            counter["n"] += 1
        return {"sessionId": sid}

    @app.get("/session/{sid}")
    def session_info(sid: str):
        sess = get_session(sid)
        return {"sessionId": sid, "history": sess.history}

    @app.get("/model")
    def model_info():
        if bundle is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded")
        cfg = bundle.model.config
        return {
            "config": cfg.to_json(),
            "variant": cfg.variant,
            "attention": cfg.attention,
            "snapshot": cfg.snapshot,
            "belief": cfg.belief,
            "vocabSize": len(bundle.model.vocab),
            "indicatorSpec": list(bundle.model.indicators.ids),
        }

    @app.post("/session/{sid}/utterance")
    def utterance(sid: str, body: UtteranceIn):
        sess = get_session(sid)
        text = body.text.strip().lower()
        if not text:
            raise HTTPException(status_code=400, detail="empty utterance")
        tokens = text.split()
        model = bundle.model
        with sess.lock:
            stage = "track"
            try:
                turns = sess.user_turns + [tokens]
                stage = "respond"
                result = respond(model, bundle.trackers, turns,
                                 bundle.database, sess.rng,
                                 previous_pointer=sess.pointer)
                stage = "inspect"
                payload = {
                    "surface": result.surface,
                    "skeletal": result.skeletal,
                    "beliefSummary": _belief_summary(bundle, result.belief),
                    "dbMatchBin": min(len(result.db_matches), 5),
                    "dbMatchCount": len(result.db_matches),
                }
                if result.entity:
                    payload["offeredEntity"] = result.entity
                if result.failed_tokens:
                    payload["failedTokens"] = result.failed_tokens
                decoded_ids = [model.vocab.index.get(t, model.vocab.UNK)
                               for t in result.skeletal]
                if decoded_ids and (model.config.attention
                                    or model.config.snapshot):
                    td = _turn_data(bundle, result, tokens)
                    z, _ = model.intent.forward(td.user_ids,
                                                bos_id=model.vocab.EOS)
                    tape = _traced_teacher(model, z, td, decoded_ids)
                    if model.config.attention:
                        payload["attentionHeatMap"] = {
                            "tokens": result.skeletal,
                            "trackers": [s for s, _ in td.bel],
                            "rows": [[float(a) for a in row]
                                     for row in tape.alphas],
                        }
                    if model.config.snapshot:
                        d = model.indicators.d
                        squeezed = (tape.m_rows[:, :d] + 1.0) / 2.0
                        payload["snapshotTrace"] = {
                            "tokens": result.skeletal,
                            "indicators": list(model.indicators.ids),
                            "values": [[float(v) for v in row]
                                       for row in squeezed],
                        }
            except HTTPException:
                raise
            except Exception as exc:  # noqa: BLE001 - surface the stage
                raise HTTPException(status_code=500,
                                    detail=f"pipeline failed at {stage}: "
                                           f"{exc}") from exc
            sess.user_turns.append(tokens)
            sess.pointer = result.entity
            sess.history.append({"user": text, "system": result.surface,
                                 "skeletal": result.skeletal})
        return payload

    def _turn_data(bundle: Bundle, result, tokens) -> TurnData:
        model = bundle.model
        ontology = bundle.ontology
        delex = cp.Delexicaliser(ontology, bundle.database)
        x, _ = match_bin(result.belief, ontology, bundle.database)
        return TurnData(
            user_ids=model.vocab.encode(delex(tokens)),
            target_ids=[],
            bel=belief_vectors(result.belief, ontology, model.config.belief),
            x=x,
            snap=None,
            sys_tokens=[],
            user_lex=tokens,
            requested={},
            belief=result.belief,
        )

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

        @app.get("/")
        def root():
            return RedirectResponse(url="/ui/")

    return app


def serve(bundle: Bundle, host: str = "127.0.0.1", port: int = 8000,
          base_seed: int = 0, ui_dir: str | None = None):
    import uvicorn

    app = create_app(bundle, base_seed=base_seed, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
