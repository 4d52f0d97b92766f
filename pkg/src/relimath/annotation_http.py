"""HTTP surface for the annotation service, plus static hosting of the review UI.

Error responses carry a structured code (``sequencing``, ``validation``,
``conflict``, ``incomplete``, ``not_found``) so scripted clients and the UI
share one contract. If ``ANNOTATION_API_TOKEN`` is set in the environment a
matching bearer token is required on every /api request.
"""
from __future__ import annotations

import os
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .annotation import SessionStore
from .datasets import read_problems, read_records
from .errors import (
    AnnotationConflictError,
    AnnotationError,
    AnnotationValidationError,
    IncompleteSessionError,
    SequencingError,
    SessionNotFoundError,
)

TOKEN_ENV_VAR = "ANNOTATION_API_TOKEN"

_STATUS = {
    SequencingError: 409,
    AnnotationConflictError: 409,
    AnnotationValidationError: 422,
    IncompleteSessionError: 409,
    SessionNotFoundError: 404,
}


class CreateSessionBody(BaseModel):
    session_id: str = "main"
    candidates_path: str
    problems_path: str
    shuffle_seed: int | None = None


class SubmitBody(BaseModel):
    candidate_id: str
    human_check: int
    difficulty_eval: int | None = None
    annotator: str = ""


class ExportBody(BaseModel):
    out_path: str
    rejected_path: str | None = None


def _error_response(exc: AnnotationError) -> JSONResponse:
    body = {"error": {"code": exc.code, "message": str(exc)}}
    if isinstance(exc, IncompleteSessionError):
        body["error"]["pending"] = exc.pending
    return JSONResponse(status_code=_STATUS.get(type(exc), 400), content=body)


def create_app(store: SessionStore, static_dir: str | Path | None = None,
               workdir: str | Path = ".") -> FastAPI:
    app = FastAPI(title="annotation-service")
    workdir = Path(workdir)

    @app.exception_handler(AnnotationError)
    async def handle_annotation_error(request: Request, exc: AnnotationError):
        return _error_response(exc)

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        token = os.environ.get(TOKEN_ENV_VAR, "")
        if token and request.url.path.startswith("/api"):
            supplied = request.headers.get("Authorization", "")
            if supplied != f"Bearer {token}":
                return JSONResponse(
                    status_code=401,
                    content={"error": {"code": "unauthorized", "message": "bad bearer token"}},
                )
        return await call_next(request)

    @app.post("/api/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        candidates = read_records(workdir / body.candidates_path, "candidate")
        problems = read_problems(workdir / body.problems_path)
        session = store.create_session(
            body.session_id, candidates, problems, shuffle_seed=body.shuffle_seed
        )
        return {"session_id": session.session_id, "total": len(session.queue)}

    @app.get("/api/sessions/{session_id}/next")
    def next_candidate(session_id: str):
        payload = store.next_payload(session_id)
        if payload is None:
            return {"done": True, "progress": store.get(session_id).progress()}
        return {"done": False, **payload}

    @app.post("/api/sessions/{session_id}/annotations")
    def submit(session_id: str, body: SubmitBody):
        store.submit(
            session_id,
            body.candidate_id,
            body.human_check,
            body.difficulty_eval,
            annotator=body.annotator,
        )
        return {"acknowledged": True, "progress": store.get(session_id).progress()}

    @app.get("/api/sessions/{session_id}/progress")
    def progress(session_id: str):
        return store.get(session_id).progress()

    @app.post("/api/sessions/{session_id}/export")
    def export(session_id: str, body: ExportBody):
        return store.export_to_files(
            session_id,
            workdir / body.out_path,
            workdir / body.rejected_path if body.rejected_path else None,
        )

    if static_dir is not None and Path(static_dir).is_dir():
        static_path = Path(static_dir)

        @app.get("/")
        def index():
            return FileResponse(static_path / "index.html")

        app.mount("/", StaticFiles(directory=static_path), name="ui")

    return app
