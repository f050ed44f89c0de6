"""HTTP facade over the session store.

Endpoints mirror the session operations one-to-one and serialise all
mutations per session, so concurrent clients see a strict order of
model updates. Rankings carry an opaque token; feedback submitted with
an outdated token is rejected with 409 rather than applied against a
model the client never saw.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .data import FeedbackLabel
from .rmel import RmelConfig
from .sessions import SessionConfig, SessionError, SessionStore


class CreateSessionRequest(BaseModel):
    dataset_id: str
    eta: float = 0.5
    margin: float = 1.0
    max_rounds_per_probe: int = Field(default=3, ge=1)
    window_k: int = Field(default=50, ge=1)
    top_k_default: int = Field(default=50, ge=1)
    seed: int = 0


class FeedbackRequest(BaseModel):
    probe_id: str
    item_id: str
    label: FeedbackLabel
    token: str
    top_k: Optional[int] = Field(default=None, ge=1)


class EnsembleRequest(BaseModel):
    nu: float = 0.1
    step: float = 1e-3
    max_iters: int = Field(default=200, ge=1)
    tol: float = 1e-8
    init: str = "identity"
    seed: int = 0


def create_app(store_root: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    store = SessionStore(store_root)
    app = FastAPI(title="rankloop", version="0.1.0")
    app.state.store = store

    @app.exception_handler(SessionError)
    async def session_error_handler(request: Request, exc: SessionError):
        return JSONResponse(
            status_code=exc.http_status,
            content={"error": exc.code, "detail": str(exc)},
        )

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        config = SessionConfig(
            dataset_id=req.dataset_id,
            eta=req.eta,
            margin=req.margin,
            max_rounds_per_probe=req.max_rounds_per_probe,
            window_k=req.window_k,
            top_k_default=req.top_k_default,
            seed=req.seed,
        )
        sess = store.create_session(config)
        return {"session_id": sess.id, "probe": sess.probe_info()}

    @app.get("/sessions/{session_id}/probe")
    def get_probe(session_id: str):
        sess = store.session(session_id)
        with sess.lock:
            return sess.probe_info()

    @app.get("/sessions/{session_id}/ranking")
    def get_ranking(session_id: str, top_k: Optional[int] = Query(default=None, ge=1)):
        sess = store.session(session_id)
        with sess.lock:
            return sess.ranking(top_k)

    @app.post("/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, req: FeedbackRequest):
        sess = store.session(session_id)
        with sess.lock:
            return sess.submit_feedback(req.probe_id, req.item_id, req.label,
                                        req.token, req.top_k)

    @app.post("/sessions/{session_id}/advance")
    def post_advance(session_id: str):
        sess = store.session(session_id)
        with sess.lock:
            return sess.advance()

    @app.post("/sessions/{session_id}/ensemble")
    def post_ensemble(session_id: str, req: EnsembleRequest):
        sess = store.session(session_id)
        config = RmelConfig(nu=req.nu, step=req.step, max_iters=req.max_iters,
                            tol=req.tol, init=req.init, seed=req.seed)
        with sess.lock:
            return sess.train_ensemble(config)

    @app.get("/reports/{report_id}")
    def get_report(report_id: str):
        path = store.report_path(report_id)
        if path.exists():
            return FileResponse(path, media_type="application/json")
        sess = store.session(report_id)  # raises unknown_session -> 404
        with sess.lock:
            return sess.report()

    @app.get("/files/{dataset_id}/{file_path:path}")
    def get_file(dataset_id: str, file_path: str):
        base = store.dataset_dir(dataset_id).resolve()
        target = (base / file_path).resolve()
        if base not in target.parents and target != base:
            raise SessionError("bad_path", "path escapes the dataset directory", 403)
        if not target.is_file():
            raise SessionError("not_found", f"no file {file_path!r}", 404)
        return FileResponse(target)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
