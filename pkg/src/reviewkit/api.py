"""REST facade over the review engine, plus a server-sent event stream.

Thin by design: every state change an endpoint performs is exactly the events
the engine appends for the corresponding operation.
"""

from __future__ import annotations

import json
import queue as queue_module
import threading
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .config import EngineConfig
from .engine import ReviewEngine
from .errors import (
    AlreadyDecided,
    CorruptLog,
    NotFound,
    ProviderProtocolError,
    ProviderUnavailable,
    QueueExhausted,
    RetriableProviderError,
    ReviewKitError,
    StalePropagation,
    StorageError,
    ValidationError,
    FilterCreationFailed,
)
from .model import FeedbackTemplate, Selection
from .store import SessionStore

_STATUS_BY_ERROR = (
    (CorruptLog, 500),
    (StorageError, 500),
    (ProviderProtocolError, 502),
    (RetriableProviderError, 503),
    (ProviderUnavailable, 503),
    (FilterCreationFailed, 503),
    (AlreadyDecided, 409),
    (StalePropagation, 409),
    (QueueExhausted, 409),
    (NotFound, 404),
    (ValidationError, 400),
)


def _status_for(exc: ReviewKitError) -> int:
    for cls, status in _STATUS_BY_ERROR:
        if isinstance(exc, cls):
            return status
    return 500


class SessionCreate(BaseModel):
    exercise_prompt: str
    config: dict | None = None


class SubmissionsBody(BaseModel):
    submissions: list[dict]


class GenerateBody(BaseModel):
    components: list[str] | None = None
    default_abstraction: int = 2


class LevelBody(BaseModel):
    level: int


class FilterCreate(BaseModel):
    session_id: str | None = None
    selection: dict | None = None
    target: str | None = None
    summary: str | None = None
    issue_tag: str | None = None


class FilterPatch(BaseModel):
    active: bool


class RevisionCreate(BaseModel):
    draft_id: str
    origin: str
    shortcut: str | None = None
    selection: dict | None = None
    query_text: str | None = None
    component: str | None = None
    new_text: str | None = None


class DecisionBody(BaseModel):
    decision: str


class EngineRegistry:
    def __init__(self, store: SessionStore, config: EngineConfig | None,
                 clock=None, provider=None):
        self.store = store
        self.config = config
        self.clock = clock
        self.provider = provider
        self._engines: dict[str, ReviewEngine] = {}
        self._lock = threading.Lock()

    def create(self, exercise_prompt: str, config: EngineConfig) -> ReviewEngine:
        with self._lock:
            engine = ReviewEngine.create(
                self.store, exercise_prompt, config,
                provider=self.provider, clock=self.clock,
            )
            self._engines[engine.session_id] = engine
            return engine

    def get(self, session_id: str) -> ReviewEngine:
        with self._lock:
            if session_id not in self._engines:
                self._engines[session_id] = ReviewEngine.open(
                    self.store, session_id,
                    provider=self.provider, clock=self.clock,
                )
            return self._engines[session_id]

    def resolve(self, scoped_id: str) -> ReviewEngine:
        """Map a session-prefixed id like s0-d3 back to its engine."""
        for session_id in sorted(self._engines, key=len, reverse=True):
            if scoped_id.startswith(session_id + "-"):
                return self._engines[session_id]
        for session_id in sorted(self.store.list_sessions(), key=len, reverse=True):
            if scoped_id.startswith(session_id + "-"):
                return self.get(session_id)
        raise NotFound(f"no session owns id {scoped_id!r}")


def create_app(store_dir: str, config: EngineConfig | None = None,
               clock=None, provider=None) -> FastAPI:
    app = FastAPI(title="reviewkit", version="0.1.0")
    base_config = config or EngineConfig()
    store = SessionStore(store_dir, fsync=base_config.fsync)
    registry = EngineRegistry(store, base_config, clock=clock, provider=provider)
    app.state.registry = registry

    @app.exception_handler(ReviewKitError)
    async def handle_domain_error(request: Request, exc: ReviewKitError):
        return JSONResponse(
            status_code=_status_for(exc),
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    # -- sessions ------------------------------------------------------------

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionCreate) -> dict:
        cfg = (EngineConfig.from_dict({**base_config.to_dict(), **body.config})
               if body.config else base_config)
        engine = registry.create(body.exercise_prompt, cfg)
        return engine.session.to_dict()

    @app.get("/sessions")
    def list_sessions() -> list[str]:
        return store.list_sessions()

    @app.post("/sessions/{session_id}/submissions")
    def ingest(session_id: str, body: SubmissionsBody) -> dict:
        count = registry.get(session_id).ingest_submissions(body.submissions)
        return {"ingested": count}

    @app.post("/sessions/{session_id}/generate")
    def generate(session_id: str, body: GenerateBody) -> dict:
        template = FeedbackTemplate(
            enabled_components=tuple(body.components) if body.components else
            FeedbackTemplate().enabled_components,
            default_abstraction=body.default_abstraction,
        )
        return registry.get(session_id).batch_generate(template)

    @app.get("/sessions/{session_id}/queue")
    def queue_view(session_id: str) -> list[dict]:
        return registry.get(session_id).queue_view()

    @app.post("/sessions/{session_id}/queue/next")
    def next_pair(session_id: str) -> dict:
        submission, draft = registry.get(session_id).next_pair()
        return {"submission": submission.to_dict(), "draft": draft.public_view()}

    @app.get("/sessions/{session_id}/filters")
    def filters(session_id: str) -> list[dict]:
        return registry.get(session_id).filters_export()

    @app.post("/sessions/{session_id}/filters/predefined")
    def build_predefined(session_id: str) -> list[dict]:
        clusters = registry.get(session_id).build_predefined_filters()
        return [c.to_dict() for c in clusters]

    @app.get("/sessions/{session_id}/metrics")
    def metrics(session_id: str) -> dict:
        return registry.get(session_id).compute_metrics()

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str) -> list[dict]:
        return [e.to_dict() for e in registry.get(session_id).events()]

    @app.get("/sessions/{session_id}/revisions")
    def revision_log(session_id: str) -> list[dict]:
        return registry.get(session_id).export_revision_log()

    @app.get("/sessions/{session_id}/drafts")
    def drafts(session_id: str) -> list[dict]:
        return registry.get(session_id).export_drafts()

    @app.get("/sessions/{session_id}/stream")
    def stream(session_id: str) -> StreamingResponse:
        engine = registry.get(session_id)
        subscriber = engine.subscribe()

        def event_stream():
            try:
                yield ": connected\n\n"
                while True:
                    try:
                        record = subscriber.get(timeout=15.0)
                    except queue_module.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield (
                        f"event: {record['kind']}\n"
                        f"data: {json.dumps(record, ensure_ascii=False)}\n\n"
                    )
            finally:
                engine.unsubscribe(subscriber)

        return StreamingResponse(event_stream(), media_type="text/event-stream")

    # -- drafts -------------------------------------------------------------------

    @app.get("/drafts/{draft_id}")
    def get_draft(draft_id: str) -> dict:
        return registry.resolve(draft_id).get_draft(draft_id).public_view()

    @app.post("/drafts/{draft_id}/components/{kind}/level")
    def set_level(draft_id: str, kind: str, body: LevelBody) -> dict:
        engine = registry.resolve(draft_id)
        component = engine.set_abstraction_level(draft_id, kind, body.level)
        return component.public_view()

    @app.get("/drafts/{draft_id}/components/{kind}/grid")
    def grid(draft_id: str, kind: str) -> list[dict]:
        return registry.resolve(draft_id).render_grid(draft_id, kind)

    @app.get("/drafts/{draft_id}/propagations")
    def propagations(draft_id: str) -> list[dict]:
        engine = registry.resolve(draft_id)
        draft = engine.get_draft(draft_id)
        return engine.list_propagations(draft.submission_id)

    @app.post("/drafts/{draft_id}/validate")
    def validate_draft(draft_id: str) -> dict:
        return registry.resolve(draft_id).validate_pair(draft_id).public_view()

    @app.post("/drafts/{draft_id}/send")
    def send_draft(draft_id: str) -> dict:
        return registry.resolve(draft_id).send_feedback(draft_id).public_view()

    # -- filters --------------------------------------------------------------------

    @app.post("/filters", status_code=201)
    def create_filter(body: FilterCreate) -> dict:
        if body.selection is not None:
            selection = Selection.from_dict(body.selection)
            if selection.draft_id:
                engine = registry.resolve(selection.draft_id)
            elif body.session_id:
                engine = registry.get(body.session_id)
            else:
                raise ValidationError("selection filters need a draft_id or session_id")
            return engine.create_filter_from_selection(selection).to_dict()
        if not body.session_id:
            raise ValidationError("manual filters need a session_id")
        if not body.target or not body.summary:
            raise ValidationError("manual filters need target and summary")
        engine = registry.get(body.session_id)
        return engine.create_filter_manual(
            body.target, body.summary, issue_tag=body.issue_tag
        ).to_dict()

    @app.patch("/filters/{filter_id}")
    def patch_filter(filter_id: str, body: FilterPatch) -> dict:
        engine = registry.resolve(filter_id)
        return engine.set_filter_active(filter_id, body.active).to_dict()

    # -- revisions -------------------------------------------------------------------

    @app.post("/revisions", status_code=201)
    def create_revision(body: RevisionCreate) -> dict:
        engine = registry.resolve(body.draft_id)
        selection = Selection.from_dict(body.selection) if body.selection else None
        outcome = engine.request_revision(
            body.draft_id, body.origin,
            shortcut=body.shortcut,
            selection=selection,
            query_text=body.query_text,
            component=body.component,
            new_text=body.new_text,
        )
        return outcome.to_dict()

    @app.post("/revisions/{revision_id}/decision")
    def decide_revision(revision_id: str, body: DecisionBody) -> dict:
        engine = registry.resolve(revision_id)
        return engine.decide_revision(revision_id, body.decision).to_dict()

    # -- propagations ------------------------------------------------------------------

    @app.post("/propagations/{propagation_id}/decision")
    def decide_propagation(propagation_id: str, body: DecisionBody) -> dict:
        engine = registry.resolve(propagation_id)
        return engine.decide_propagation(propagation_id, body.decision).to_dict()

    return app
