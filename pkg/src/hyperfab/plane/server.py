"""HTTP control plane under /v1: jobs, spaces, analytics, live event stream."""

from __future__ import annotations

import json
import queue
from typing import Any

from fastapi import FastAPI, HTTPException, Header, Query, Request
from fastapi.responses import PlainTextResponse, StreamingResponse
from pydantic import BaseModel

from ..space import SpaceError, SpaceValidationError
from ..advisor import InsufficientDataError
from ..estimator import LineageError
from .jobs import Engine, JobError, JobSpec, UnknownJobError
from .reporting import render_report

TERMINAL = ("COMPLETE", "FAILED", "STOPPED")


class SpaceCreateRequest(BaseModel):
    space_id: str
    document: str | None = None
    doc: dict[str, Any] | None = None
    note: str = ""


class SpaceVersionRequest(BaseModel):
    edits: list[dict[str, Any]]
    note: str = ""


class SpaceEditRequest(BaseModel):
    version: int | None = None
    edits: list[dict[str, Any]] | None = None
    note: str = ""


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="hyperfab", version="0.1.0")
    app.state.engine = engine

    def _job_or_404(job_id: str):
        try:
            return engine.status(job_id)
        except UnknownJobError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    # -- spaces -----------------------------------------------------------------

    @app.post("/v1/spaces")
    def create_space(req: SpaceCreateRequest):
        try:
            document = req.document if req.document is not None else (req.doc or {})
            space = engine.create_space(document, space_id=req.space_id, note=req.note)
        except SpaceError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"space_id": space.space_id, "version": space.version}

    @app.get("/v1/spaces/{space_id}")
    def get_space(space_id: str):
        try:
            versions = engine.spaces.versions(space_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=f"unknown space {space_id!r}") from exc
        return {"space_id": space_id, "versions": versions, "latest": versions[-1]}

    @app.get("/v1/spaces/{space_id}/versions/{version}")
    def get_space_version(space_id: str, version: int):
        from ..space import serialize_space, space_to_doc

        try:
            space = engine.spaces.get(space_id, version)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {"space_id": space_id, "version": space.version,
                "parent_version": space.parent_version, "note": space.note,
                "doc": space_to_doc(space), "document": serialize_space(space)}

    @app.post("/v1/spaces/{space_id}/versions")
    def new_space_version(space_id: str, req: SpaceVersionRequest):
        try:
            space = engine.new_space_version(space_id, req.edits, note=req.note)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=f"unknown space {space_id!r}") from exc
        except SpaceValidationError as exc:
            raise HTTPException(status_code=422,
                                detail={"message": str(exc), "path": exc.path}) from exc
        return {"space_id": space.space_id, "version": space.version,
                "parent_version": space.parent_version}

    @app.get("/v1/spaces/{space_id}/diff")
    def space_diff(space_id: str, v_from: int = Query(alias="from"),
                   v_to: int = Query(alias="to")):
        try:
            return {"entries": engine.space_diff(space_id, v_from, v_to)}
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    # -- jobs --------------------------------------------------------------------

    @app.post("/v1/jobs")
    def submit_job(spec: dict[str, Any],
                   idempotency_key: str | None = Header(default=None)):
        try:
            job_id = engine.submit(JobSpec.from_doc(spec),
                                   idempotency_key=idempotency_key)
        except (JobError, SpaceError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"job_id": job_id}

    @app.get("/v1/jobs")
    def list_jobs():
        return {"jobs": engine.list_jobs()}

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        return _job_or_404(job_id).summary()

    @app.get("/v1/jobs/{job_id}/candidates")
    def list_candidates(job_id: str, state: str | None = None, limit: int | None = None):
        _job_or_404(job_id)
        return {"candidates": engine.candidates(job_id, state_filter=state, limit=limit)}

    @app.get("/v1/jobs/{job_id}/report", response_class=PlainTextResponse)
    def job_report(job_id: str, format: str = "csv"):
        state = _job_or_404(job_id)
        space = engine.spaces.get(state.space_id, state.space_version)
        try:
            return render_report(state, space, format)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/v1/jobs/{job_id}/stop")
    def stop_job(job_id: str):
        _job_or_404(job_id)
        try:
            engine.stop(job_id)
        except JobError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return {"job_id": job_id, "stopping": True}

    @app.post("/v1/jobs/{job_id}/space-edit")
    def apply_space_edit(job_id: str, req: SpaceEditRequest):
        state = _job_or_404(job_id)
        version = req.version
        try:
            if version is None:
                if not req.edits:
                    raise HTTPException(status_code=422,
                                        detail="provide a version or an edit list")
                space = engine.new_space_version(state.space_id, req.edits, note=req.note)
                version = space.version
            engine.apply_space_edit(job_id, version)
        except SpaceValidationError as exc:
            raise HTTPException(status_code=422,
                                detail={"message": str(exc), "path": exc.path}) from exc
        except (LineageError, JobError) as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {"job_id": job_id, "space_version": version}

    # -- analytics ----------------------------------------------------------------

    def _analytics(job_id: str, fn):
        _job_or_404(job_id)
        try:
            return fn()
        except InsufficientDataError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    @app.get("/v1/jobs/{job_id}/importance")
    def get_importance(job_id: str):
        return _analytics(job_id, lambda: engine.importance(job_id))

    @app.get("/v1/jobs/{job_id}/projection")
    def get_projection(job_id: str):
        return _analytics(job_id, lambda: {"points": engine.projection(job_id)})

    @app.get("/v1/jobs/{job_id}/suggestion")
    def get_suggestion(job_id: str, q: float = 0.2):
        return _analytics(job_id, lambda: engine.suggestion(job_id, q=q))

    # -- events -------------------------------------------------------------------

    @app.get("/v1/jobs/{job_id}/events")
    def events(job_id: str, request: Request,
               last_event_id: str | None = Header(default=None)):
        _job_or_404(job_id)
        try:
            start_after = int(last_event_id) if last_event_id is not None else -1
        except ValueError:
            start_after = -1

        def stream():
            history, live = engine.subscribe(job_id, last_event_id=start_after)
            try:
                for seq, event in history:
                    yield _sse(seq, event)
                while True:
                    status = engine.status(job_id).status
                    try:
                        seq, event = live.get(timeout=0.5)
                    except queue.Empty:
                        if status in TERMINAL:
                            return  # stream closes cleanly once the job is over
                        yield ": keep-alive\n\n"
                        continue
                    yield _sse(seq, event)
                    if event.get("type") == "job_status" and event.get("status") in TERMINAL:
                        return
            finally:
                engine.unsubscribe(job_id, live)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def _sse(seq: int, event: dict[str, Any]) -> str:
    return (f"id: {seq}\n"
            f"event: {event.get('type', 'message')}\n"
            f"data: {json.dumps(event, separators=(',', ':'))}\n\n")


def serve(data_dir: str, host: str = "127.0.0.1", port: int = 8080) -> None:
    import uvicorn

    engine = Engine(data_dir)
    uvicorn.run(create_app(engine), host=host, port=port, log_level="warning")
