"""The per-session review engine.

Every mutation is an event: commands compute whatever they need (including
provider calls), append one event per state change, then apply it. Applying
an event is a pure function of (state, payload), so replaying the log
rebuilds exactly the state that produced it — providers are never consulted
during replay.
"""

from __future__ import annotations

import logging
import queue as queue_module
import threading
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from typing import Callable

from .config import EngineConfig
from .embedding import EmbeddingVector, cosine, normalized_mean
from .errors import (
    AlreadyDecided,
    NotFound,
    ProviderError,
    ProviderProtocolError,
    ProviderUnavailable,
    QueueExhausted,
    RetriableProviderError,
    StalePropagation,
    ValidationError,
    FilterCreationFailed,
    EmptyPrompt,
)
from .filters import filter_keywords, greedy_threshold_cluster
from .generation import build_draft, generation_request, render_grid
from .metrics import compute_metrics
from .model import (
    ABSTRACTION_LEVELS,
    ClusterSummary,
    FeedbackDraft,
    FeedbackTemplate,
    FilterMatch,
    Pattern,
    Propagation,
    QueueEntry,
    RevisionAction,
    RevisionOutcome,
    Selection,
    SemanticFilter,
    Session,
    Submission,
)
from .providers import Provider, ProviderRequest, build_provider
from .providers.mock import is_greeting_text
from .queue import QueueWeights, order_entries, score
from .store import EventRecord, SessionStore, format_timestamp, utc_now
from .textspan import SpanDiff, SpanEdit, apply_diff, diff_texts, shift_span, validate_edits

logger = logging.getLogger("reviewkit.engine")

Clock = Callable[[], datetime]

RESEQUENCE_TRIGGERS = (
    "filter_changed", "revision_accepted", "pair_reviewed", "propagation_created",
)

STREAM_KINDS = {
    "queue_resequenced",
    "propagations_materialized",
    "propagation_decided",
    "propagation_stale",
    "coherence_skipped",
}


class SessionState:
    """Everything replay rebuilds. Ephemeral caches live on the engine."""

    def __init__(self):
        self.session: Session | None = None
        self.submissions: dict[str, Submission] = {}
        self.drafts: dict[str, FeedbackDraft] = {}
        self.draft_by_submission: dict[str, str] = {}
        self.generation_failures: dict[str, str] = {}
        self.template: FeedbackTemplate | None = None
        self.filters: dict[str, SemanticFilter] = {}
        self.clusters: list[ClusterSummary] = []
        self.revisions: dict[str, RevisionOutcome] = {}
        self.actions: dict[str, RevisionAction] = {}
        self.action_by_revision: dict[str, str] = {}
        self.propagations: dict[str, Propagation] = {}
        self.pair_ordinals: dict[str, int] = {}
        self.queue_order: list[str] = []
        self.queue_entries: list[QueueEntry] = []
        self.open_pair: str | None = None
        self.last_opened: str | None = None
        self.reviewed: list[str] = []
        self.counters: dict[str, int] = {
            "filters": 0, "revisions": 0, "actions": 0,
            "propagations": 0, "clusters": 0,
        }

    # -- helpers -------------------------------------------------------------

    def draft_of(self, submission_id: str) -> FeedbackDraft | None:
        draft_id = self.draft_by_submission.get(submission_id)
        return self.drafts.get(draft_id) if draft_id else None

    def unreviewed_submissions(self) -> list[str]:
        out = []
        for sid in self.submissions:
            draft = self.draft_of(sid)
            if draft is not None and draft.status == "unreviewed":
                out.append(sid)
        return out

    def pending_propagations_for(self, submission_id: str,
                                 component: str | None = None) -> list[Propagation]:
        out = [
            p for p in self.propagations.values()
            if p.submission_id == submission_id and p.state == "pending"
            and (component is None or p.component == component)
        ]
        out.sort(key=lambda p: p.ordinal)
        return out

    def pending_revision_for(self, draft_id: str, component: str) -> RevisionOutcome | None:
        for r in self.revisions.values():
            if r.draft_id == draft_id and r.component == component and r.state == "pending":
                return r
        return None

    def to_snapshot(self) -> dict:
        return {
            "session": self.session.to_dict() if self.session else None,
            "submissions": [s.to_dict() for s in self.submissions.values()],
            "drafts": [d.to_dict() for d in self.drafts.values()],
            "generation_failures": dict(self.generation_failures),
            "template": self.template.to_dict() if self.template else None,
            "filters": [f.to_dict() for f in self.filters.values()],
            "clusters": [c.to_dict() for c in self.clusters],
            "revisions": [r.to_dict() for r in self.revisions.values()],
            "actions": [a.to_dict() for a in self.actions.values()],
            "propagations": [p.to_dict() for p in self.propagations.values()],
            "pair_ordinals": dict(self.pair_ordinals),
            "queue_order": list(self.queue_order),
            "queue_entries": [e.to_dict() for e in self.queue_entries],
            "open_pair": self.open_pair,
            "last_opened": self.last_opened,
            "reviewed": list(self.reviewed),
            "counters": dict(self.counters),
        }

    @classmethod
    def from_snapshot(cls, data: dict) -> "SessionState":
        state = cls()
        if data.get("session"):
            state.session = Session.from_dict(data["session"])
        for s in data.get("submissions", []):
            sub = Submission.from_dict(s)
            state.submissions[sub.submission_id] = sub
        for d in data.get("drafts", []):
            draft = FeedbackDraft.from_dict(d)
            state.drafts[draft.draft_id] = draft
            state.draft_by_submission[draft.submission_id] = draft.draft_id
        state.generation_failures = dict(data.get("generation_failures", {}))
        if data.get("template"):
            state.template = FeedbackTemplate.from_dict(data["template"])
        for f in data.get("filters", []):
            flt = SemanticFilter.from_dict(f)
            state.filters[flt.filter_id] = flt
        state.clusters = [ClusterSummary.from_dict(c) for c in data.get("clusters", [])]
        for r in data.get("revisions", []):
            rev = RevisionOutcome.from_dict(r)
            state.revisions[rev.revision_id] = rev
        for a in data.get("actions", []):
            action = RevisionAction.from_dict(a)
            state.actions[action.action_id] = action
            state.action_by_revision[action.source_revision_id] = action.action_id
        for p in data.get("propagations", []):
            prop = Propagation.from_dict(p)
            state.propagations[prop.propagation_id] = prop
        state.pair_ordinals = {k: int(v) for k, v in data.get("pair_ordinals", {}).items()}
        state.queue_order = list(data.get("queue_order", []))
        state.queue_entries = [QueueEntry.from_dict(e) for e in data.get("queue_entries", [])]
        state.open_pair = data.get("open_pair")
        state.last_opened = data.get("last_opened")
        state.reviewed = list(data.get("reviewed", []))
        state.counters = dict(data.get("counters", {}))
        return state


class ReviewEngine:
    def __init__(self, store: SessionStore, session_id: str, config: EngineConfig,
                 provider: Provider | None = None, clock: Clock | None = None):
        self.store = store
        self.session_id = session_id
        self.config = config
        self.provider = provider if provider is not None else build_provider(config)
        self.clock = clock or utc_now
        self.state = SessionState()
        self._lock = threading.RLock()
        self._embeddings: dict[str, EmbeddingVector] = {}
        self._match_cache: dict[tuple[str, str], tuple[int, FilterMatch]] = {}
        self._subscribers: list[queue_module.Queue] = []

    # -- lifecycle -----------------------------------------------------------

    @classmethod
    def create(cls, store: SessionStore, exercise_prompt: str,
               config: EngineConfig | None = None,
               provider: Provider | None = None,
               clock: Clock | None = None) -> "ReviewEngine":
        if not exercise_prompt or not exercise_prompt.strip():
            raise EmptyPrompt("exercise_prompt must be non-empty")
        config = config or EngineConfig()
        session_id = store.allocate_session_id()
        engine = cls(store, session_id, config, provider=provider, clock=clock)
        session = Session(
            session_id=session_id,
            exercise_prompt=exercise_prompt,
            created_at=format_timestamp(engine._now()),
            config=config,
        )
        engine._commit("session_created", "reviewer", {"session": session.to_dict()})
        return engine

    @classmethod
    def open(cls, store: SessionStore, session_id: str,
             provider: Provider | None = None, clock: Clock | None = None,
             config: EngineConfig | None = None,
             use_snapshot: bool = False) -> "ReviewEngine":
        if not store.session_exists(session_id):
            raise NotFound(f"session {session_id!r} not found")
        events = store.read_events(session_id)
        if config is None:
            config = EngineConfig()
            for record in events:
                if record.kind == "session_created":
                    config = EngineConfig.from_dict(record.payload["session"]["config"])
                    break
        engine = cls(store, session_id, config, provider=provider, clock=clock)
        start_from = 0
        if use_snapshot:
            loaded = store.read_snapshot(session_id)
            if loaded is not None:
                snapshot, last_event_id = loaded
                engine.state = SessionState.from_snapshot(snapshot)
                start_from = last_event_id + 1
        for record in events:
            if record.event_id >= start_from:
                engine._apply(record)
        return engine

    @classmethod
    def replay_state(cls, store: SessionStore, session_id: str) -> SessionState:
        """Rebuild pure session state from the log alone."""
        events = store.read_events(session_id)
        config = EngineConfig()
        for record in events:
            if record.kind == "session_created":
                config = EngineConfig.from_dict(record.payload["session"]["config"])
                break
        engine = cls(store, session_id, config, provider=_NullProvider())
        for record in events:
            engine._apply(record)
        return engine.state

    @property
    def session(self) -> Session:
        if self.state.session is None:
            raise NotFound(f"session {self.session_id!r} has no session_created event")
        return self.state.session

    def events(self) -> list[EventRecord]:
        return self.store.read_events(self.session_id)

    def write_snapshot(self):
        log = self.store.log(self.session_id)
        return self.store.write_snapshot(
            self.session_id, self.state.to_snapshot(), log.next_event_id - 1
        )

    def subscribe(self) -> queue_module.Queue:
        q: queue_module.Queue = queue_module.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue_module.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    # -- event plumbing --------------------------------------------------------

    def _now(self) -> datetime:
        dt = self.clock()
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        last = self.store.log(self.session_id).last_timestamp
        if last is not None and dt < last:
            dt = last  # server timestamps never go backwards within a session
        return dt

    def _commit(self, kind: str, actor: str, payload: dict) -> dict:
        record = self.store.append_event(
            self.session_id, kind, actor, payload, format_timestamp(self._now())
        )
        info = self._apply(record)
        if kind in STREAM_KINDS:
            for q in self._subscribers:
                q.put(record.to_dict())
        return info if isinstance(info, dict) else {}

    def _apply(self, record: EventRecord):
        handler = getattr(self, f"_apply_{record.kind}", None)
        if handler is None:
            raise ValidationError(f"unknown event kind {record.kind!r}")
        return handler(record.payload)

    def _embed(self, text: str) -> EmbeddingVector:
        if text not in self._embeddings:
            self._embeddings[text] = self.provider.embed(text)
        return self._embeddings[text]

    # -- ingestion ---------------------------------------------------------------

    def ingest_submissions(self, records: list[dict]) -> int:
        with self._lock:
            self.session  # NotFound when the log lacks session_created
            prepared = []
            base = len(self.state.submissions)
            for index, raw in enumerate(records):
                code = raw.get("code", "")
                if not code:
                    raise ValidationError(
                        f"record {index} has empty code", {"index": index}
                    )
                try:
                    severity = float(raw.get("severity", 0.5))
                except (TypeError, ValueError):
                    raise ValidationError(
                        f"record {index} severity is not a number", {"index": index}
                    )
                if not 0.0 <= severity <= 1.0:
                    raise ValidationError(
                        f"record {index} severity {severity} outside [0, 1]",
                        {"index": index},
                    )
                ordinal = base + index
                prepared.append(Submission(
                    submission_id=f"{self.session_id}-sub{ordinal}",
                    student_ref=str(raw.get("student_ref", "")),
                    code=code,
                    language_tag=str(raw.get("language_tag", "python")),
                    severity=severity,
                    ingest_ordinal=ordinal,
                ).to_dict())
            self._commit("submissions_ingested", "reviewer", {"submissions": prepared})
            return len(prepared)

    def _apply_session_created(self, payload: dict):
        self.state.session = Session.from_dict(payload["session"])

    def _apply_submissions_ingested(self, payload: dict):
        for raw in payload["submissions"]:
            sub = Submission.from_dict(raw)
            self.state.submissions[sub.submission_id] = sub

    # -- generation -----------------------------------------------------------------

    def batch_generate(self, template: FeedbackTemplate | None = None) -> dict:
        with self._lock:
            session = self.session
            template = template or self.state.template or FeedbackTemplate()
            pending = [
                s for s in self.state.submissions.values()
                if self.state.draft_by_submission.get(s.submission_id) is None
            ]
            results = {}
            if pending:
                with ThreadPoolExecutor(max_workers=self.config.fanout) as pool:
                    futures = {
                        sub.submission_id: pool.submit(
                            self.provider.generate,
                            generation_request(sub, template, session.exercise_prompt),
                        )
                        for sub in pending
                    }
                    for sid, future in futures.items():
                        try:
                            results[sid] = (future.result(), None)
                        except Exception as exc:
                            results[sid] = (None, exc)
            generated, failed = [], []
            for sub in pending:                      # commit in ingest order
                draft_id = f"{self.session_id}-d{sub.ingest_ordinal}"
                payload, error = results[sub.submission_id]
                try:
                    if error is not None:
                        raise error
                    draft = build_draft(draft_id, sub, template, payload)
                except Exception as exc:
                    failed.append({"submission_id": sub.submission_id, "error": str(exc)})
                    self._commit("generation_failed", "engine", {
                        "submission_id": sub.submission_id, "error": str(exc),
                    })
                    continue
                generated.append(draft_id)
                self._commit("draft_generated", "engine", {
                    "draft": draft.to_dict(), "template": template.to_dict(),
                })
            self._commit("generation_completed", "engine", {
                "generated": generated, "failed": failed,
            })
            return {"generated": generated, "failed": failed}

    def _apply_draft_generated(self, payload: dict):
        draft = FeedbackDraft.from_dict(payload["draft"])
        self.state.drafts[draft.draft_id] = draft
        self.state.draft_by_submission[draft.submission_id] = draft.draft_id
        self.state.generation_failures.pop(draft.submission_id, None)
        if payload.get("template"):
            self.state.template = FeedbackTemplate.from_dict(payload["template"])
        if draft.status == "unreviewed" and draft.submission_id not in self.state.queue_order:
            self.state.queue_order.append(draft.submission_id)

    def _apply_generation_failed(self, payload: dict):
        self.state.generation_failures[payload["submission_id"]] = payload["error"]

    def _apply_generation_completed(self, payload: dict):
        return None

    # -- drafts -------------------------------------------------------------------------

    def get_draft(self, draft_id: str) -> FeedbackDraft:
        draft = self.state.drafts.get(draft_id)
        if draft is None:
            raise NotFound(f"draft {draft_id!r} not found")
        return draft

    def render_grid(self, draft_id: str, kind: str) -> list[dict]:
        with self._lock:
            return render_grid(self.get_draft(draft_id), kind)

    def set_abstraction_level(self, draft_id: str, kind: str, level: int):
        with self._lock:
            if level not in ABSTRACTION_LEVELS:
                raise ValidationError(f"abstraction level must be 1..3, got {level}")
            draft = self.get_draft(draft_id)
            component = draft.component(kind)
            if component is None:
                raise NotFound(f"draft {draft_id} has no {kind} component")
            idempotent = component.active_level == level
            self._commit("abstraction_set", "reviewer", {
                "draft_id": draft_id, "kind": kind, "level": level,
                "idempotent": idempotent,
            })
            return draft.component(kind)

    def _apply_abstraction_set(self, payload: dict):
        if payload["idempotent"]:
            return {"dropped_anchors": [], "stale_propagations": []}
        draft = self.state.drafts[payload["draft_id"]]
        component = draft.component(payload["kind"])
        level = payload["level"]
        component.active_level = level
        kept, dropped = [], []
        for anchor in component.anchors:
            if anchor.span_at(level) is None:
                dropped.append(anchor.to_dict())
            else:
                kept.append(anchor)
        component.anchors = kept
        if dropped:
            logger.info(
                "draft %s %s: %d anchor(s) have no level-%d span and were dropped",
                draft.draft_id, component.kind, len(dropped), level,
            )
        stale = []
        for prop in self.state.pending_propagations_for(draft.submission_id, component.kind):
            prop.state = "stale"
            stale.append(prop.propagation_id)
        pending_rev = self.state.pending_revision_for(draft.draft_id, component.kind)
        if pending_rev is not None:
            pending_rev.state = "dismissed"
            logger.info("revision %s dismissed by abstraction change", pending_rev.revision_id)
        component.text_version += 1
        self._invalidate_matches(draft.submission_id)
        return {"dropped_anchors": dropped, "stale_propagations": stale}

    # -- shared text-edit application ------------------------------------------------

    def _apply_component_edit(self, draft: FeedbackDraft, kind: str,
                              edits: list[SpanEdit], resulting_text: str,
                              tag_additions: list[str], tag_removals: list[str],
                              exclude_propagation: str | None = None,
                              exclude_revision: str | None = None) -> dict:
        component = draft.component(kind)
        level = component.active_level
        component.texts[level] = resulting_text
        component.text_version += 1
        tags = (set(component.issue_tags) | set(tag_additions)) - set(tag_removals)
        component.issue_tags = sorted(tags)

        kept_anchors, dropped = [], []
        for anchor in component.anchors:
            span = anchor.span_at(level)
            if span is None:
                kept_anchors.append(anchor)
                continue
            shifted = shift_span(span, edits)
            if shifted is None:
                dropped.append(anchor.to_dict())
            else:
                anchor.spans[level] = shifted
                kept_anchors.append(anchor)
        component.anchors = kept_anchors
        if dropped:
            logger.info(
                "draft %s %s: %d anchor(s) deleted by a revision were dropped",
                draft.draft_id, kind, len(dropped),
            )

        stale = []
        for prop in self.state.pending_propagations_for(draft.submission_id, kind):
            if prop.propagation_id == exclude_propagation:
                continue
            new_edits, new_originals = [], []
            ok = True
            for edit, original in zip(prop.suggested.edits, prop.originals):
                shifted = shift_span((edit.start, edit.end), edits)
                if shifted is None:
                    ok = False
                    break
                new_edits.append(SpanEdit(shifted[0], shifted[1], edit.replacement))
                new_originals.append(original)
            if ok:
                prop.suggested.edits = new_edits
                prop.originals = new_originals
            else:
                prop.state = "stale"
                stale.append(prop.propagation_id)

        pending_rev = self.state.pending_revision_for(draft.draft_id, kind)
        if pending_rev is not None and pending_rev.revision_id != exclude_revision:
            new_edits = []
            ok = True
            for edit in pending_rev.suggestion.edits:
                shifted = shift_span((edit.start, edit.end), edits)
                if shifted is None:
                    ok = False
                    break
                new_edits.append(SpanEdit(shifted[0], shifted[1], edit.replacement))
            if ok:
                pending_rev.suggestion.edits = new_edits
            else:
                pending_rev.state = "dismissed"
                logger.info(
                    "revision %s dismissed: its spans were edited away",
                    pending_rev.revision_id,
                )

        self._invalidate_matches(draft.submission_id)
        return {"dropped_anchors": dropped, "stale_propagations": stale}

    # -- revisions -----------------------------------------------------------------------

    def _validate_selection(self, selection: Selection) -> None:
        if selection.source == "code":
            draft = self.get_draft(selection.draft_id or "")
            submission = self.state.submissions[draft.submission_id]
            lines = submission.code.split("\n")
            if not (1 <= selection.start <= selection.end <= len(lines)):
                raise ValidationError("code selection lines out of bounds")
            slice_text = "\n".join(lines[selection.start - 1:selection.end])
            if selection.text != slice_text:
                raise ValidationError("selection text does not match the code slice")
        elif selection.source == "feedback":
            draft = self.get_draft(selection.draft_id or "")
            component = draft.component(selection.component or "")
            if component is None:
                raise NotFound(f"draft has no {selection.component} component")
            text = component.active_text
            if not (0 <= selection.start <= selection.end <= len(text)):
                raise ValidationError("feedback selection span out of bounds")
            if selection.text != text[selection.start:selection.end]:
                raise ValidationError("selection text does not match the feedback slice")
        else:
            prompt = self.session.exercise_prompt
            if not (0 <= selection.start <= selection.end <= len(prompt)):
                raise ValidationError("prompt selection span out of bounds")
            if selection.text != prompt[selection.start:selection.end]:
                raise ValidationError("selection text does not match the prompt slice")

    def _revision_context(self, draft: FeedbackDraft, request_doc: dict) -> dict:
        submission = self.state.submissions[draft.submission_id]
        return {
            "code": submission.code,
            "exercise_prompt": self.session.exercise_prompt,
            "feedback": {c.kind: c.active_text for c in draft.components},
            "component_order": [c.kind for c in draft.components],
            "active_levels": {c.kind: c.active_level for c in draft.components},
            "tags": {c.kind: list(c.issue_tags) for c in draft.components},
            "request": request_doc,
        }

    def request_revision(self, draft_id: str, origin: str, shortcut: str | None = None,
                         selection: Selection | None = None,
                         query_text: str | None = None,
                         component: str | None = None,
                         new_text: str | None = None) -> RevisionOutcome:
        with self._lock:
            draft = self.get_draft(draft_id)
            if draft.status != "in_review":
                raise ValidationError(
                    f"draft {draft_id} is {draft.status}; open it for review first"
                )
            if origin == "slider":
                raise ValidationError("slider changes go through set_abstraction_level")
            if origin == "in_situ":
                if selection is None:
                    raise ValidationError("in-situ revisions require a selection")
                if shortcut is None:
                    raise ValidationError("in-situ revisions require a shortcut")
                if shortcut == "mention_issue" and selection.source == "feedback":
                    raise ValidationError(
                        "mention_issue applies to prompt or code selections"
                    )
                if shortcut in ("fix_error", "expand", "remove") and selection.source != "feedback":
                    raise ValidationError(f"{shortcut} applies to feedback selections")
                self._validate_selection(selection)
            elif origin == "general":
                if not query_text or not query_text.strip():
                    raise ValidationError("general revisions require query_text")
            elif origin == "manual":
                if component is None or new_text is None:
                    raise ValidationError("manual revisions require component and new_text")
                if draft.component(component) is None:
                    raise NotFound(f"draft has no {component} component")
            else:
                raise ValidationError(f"unknown revision origin {origin!r}")

            if origin == "manual":
                outcome_fields = self._manual_suggestion(draft, component, new_text)
            else:
                request_doc = {
                    "origin": origin,
                    "shortcut": shortcut,
                    "selection": selection.to_dict() if selection else None,
                    "query_text": query_text,
                }
                try:
                    response = self.provider.generate(ProviderRequest(
                        task="revise",
                        context=self._revision_context(draft, request_doc),
                    ))
                except ProviderUnavailable as exc:
                    raise RetriableProviderError(str(exc))
                outcome_fields = self._suggestion_from_response(draft, response)

            revision_id = f"{self.session_id}-r{self.state.counters['revisions']}"
            target = draft.component(outcome_fields["component"])
            pre_text = target.active_text
            old_text, introduced = _edited_region(pre_text, outcome_fields["suggestion"])
            outcome = RevisionOutcome(
                revision_id=revision_id,
                draft_id=draft_id,
                origin=origin,
                shortcut=shortcut,
                selection=selection,
                query_text=query_text,
                old_text=old_text,
                new_text=introduced,
                **outcome_fields,
            )
            superseded = self.state.pending_revision_for(draft_id, outcome.component)
            self._commit("revision_requested", "reviewer", {
                "revision": outcome.to_dict(),
                "superseded": superseded.revision_id if superseded else None,
            })
            return self.state.revisions[revision_id]

    def _manual_suggestion(self, draft: FeedbackDraft, kind: str, new_text: str) -> dict:
        component = draft.component(kind)
        old = component.active_text
        edits = diff_texts(old, new_text)
        inserted = " ".join(e.replacement for e in edits)
        level_class = "personal" if is_greeting_text(inserted) else "content"
        return {
            "component": kind,
            "suggestion": SpanDiff(
                component=kind, edits=edits,
                description=f"Manually edit the {kind} component.",
            ),
            "level_class": level_class,
            "tag_additions": [],
            "tag_removals": [],
            "issue_tag": None,
        }

    def _suggestion_from_response(self, draft: FeedbackDraft, response: dict) -> dict:
        kind = response["component"]
        component = draft.component(kind)
        if component is None:
            raise ProviderProtocolError(f"provider picked unknown component {kind!r}")
        edits = sorted(
            (SpanEdit.from_dict(e) for e in response["edits"]),
            key=lambda e: (e.start, e.end),
        )
        try:
            validate_edits(edits, len(component.active_text))
        except Exception as exc:
            raise ProviderProtocolError(f"provider edits invalid: {exc}")
        return {
            "component": kind,
            "suggestion": SpanDiff(
                component=kind, edits=edits, description=response["description"],
            ),
            "level_class": response["level_class"],
            "tag_additions": list(response.get("tag_additions", [])),
            "tag_removals": list(response.get("tag_removals", [])),
            "issue_tag": response.get("issue_tag"),
        }

    def _apply_revision_requested(self, payload: dict):
        outcome = RevisionOutcome.from_dict(payload["revision"])
        superseded = payload.get("superseded")
        if superseded and superseded in self.state.revisions:
            self.state.revisions[superseded].state = "dismissed"
        self.state.revisions[outcome.revision_id] = outcome
        self.state.counters["revisions"] += 1

    def decide_revision(self, revision_id: str, decision: str) -> RevisionOutcome:
        with self._lock:
            if decision not in ("accept", "dismiss"):
                raise ValidationError(f"decision must be accept or dismiss, got {decision!r}")
            revision = self.state.revisions.get(revision_id)
            if revision is None:
                raise NotFound(f"revision {revision_id!r} not found")
            if revision.state != "pending":
                raise AlreadyDecided(f"revision {revision_id} is already {revision.state}")
            payload: dict = {"revision_id": revision_id, "decision": decision}
            if decision == "accept":
                draft = self.get_draft(revision.draft_id)
                component = draft.component(revision.component)
                payload["resulting_text"] = apply_diff(
                    component.active_text, revision.suggestion
                )
            self._commit("revision_decided", "reviewer", payload)
            revision = self.state.revisions[revision_id]
            if (
                decision == "accept"
                and self.config.auto_propagate
                and revision.level_class == "content"
            ):
                self._run_propagation_pipeline(revision)
            if decision == "accept":
                self.resequence("revision_accepted")
            return revision

    def _apply_revision_decided(self, payload: dict):
        revision = self.state.revisions[payload["revision_id"]]
        if payload["decision"] == "dismiss":
            revision.state = "dismissed"
            return {}
        revision.state = "accepted"
        revision.resulting_text = payload["resulting_text"]
        draft = self.state.drafts[revision.draft_id]
        return self._apply_component_edit(
            draft, revision.component, revision.suggestion.edits,
            payload["resulting_text"], revision.tag_additions, revision.tag_removals,
            exclude_revision=revision.revision_id,
        )

    def _run_propagation_pipeline(self, revision: RevisionOutcome) -> None:
        if not revision.suggestion.edits:
            return                       # nothing happened; nothing to reuse
        try:
            action = self.extract_action(revision.revision_id)
        except ProviderError as exc:
            logger.warning(
                "action extraction for %s failed (%s); retry with extract_action",
                revision.revision_id, exc,
            )
            return
        self.propagate(action.action_id)

    # -- actions and propagation ------------------------------------------------------

    def extract_action(self, revision_id: str) -> RevisionAction:
        with self._lock:
            revision = self.state.revisions.get(revision_id)
            if revision is None:
                raise NotFound(f"revision {revision_id!r} not found")
            if revision.state != "accepted":
                raise ValidationError("only accepted revisions are extracted")
            existing = self.state.action_by_revision.get(revision_id)
            if existing is not None:
                return self.state.actions[existing]
            draft = self.get_draft(revision.draft_id)
            submission = self.state.submissions[draft.submission_id]
            try:
                response = self.provider.generate(ProviderRequest(
                    task="extract_action",
                    context={
                        "code": submission.code,
                        "feedback": {c.kind: c.active_text for c in draft.components},
                        "revision": {
                            "origin": revision.origin,
                            "shortcut": revision.shortcut,
                            "level_class": revision.level_class,
                            "issue_tag": revision.issue_tag,
                            "component": revision.component,
                            "old_text": revision.old_text,
                            "new_text": revision.new_text,
                        },
                    },
                ))
            except ProviderUnavailable as exc:
                raise RetriableProviderError(str(exc))
            action = RevisionAction(
                action_id=f"{self.session_id}-a{self.state.counters['actions']}",
                source_revision_id=revision_id,
                goal=response["goal"],
                code_pattern=Pattern.from_dict(response["code_pattern"]),
                feedback_pattern=Pattern.from_dict(response["feedback_pattern"]),
                created_at=format_timestamp(self._now()),
                issue_tag=revision.issue_tag,
                old_text=revision.old_text,
                new_text=revision.new_text,
                component=revision.component,
            )
            self._commit("action_extracted", "engine", {"action": action.to_dict()})
            return self.state.actions[action.action_id]

    def register_action(self, action: RevisionAction) -> RevisionAction:
        """Persist an externally built action (test harnesses, imports)."""
        with self._lock:
            if action.action_id in self.state.actions:
                raise ValidationError(f"action {action.action_id} already exists")
            self._commit("action_extracted", "engine", {"action": action.to_dict()})
            return self.state.actions[action.action_id]

    def _apply_action_extracted(self, payload: dict):
        action = RevisionAction.from_dict(payload["action"])
        self.state.actions[action.action_id] = action
        self.state.action_by_revision[action.source_revision_id] = action.action_id
        self.state.counters["actions"] += 1

    def _match_action(self, action: RevisionAction, submission: Submission,
                      draft: FeedbackDraft) -> bool:
        tags = sorted({t for c in draft.components for t in c.issue_tags})
        response = self.provider.generate(ProviderRequest(
            task="match_pattern",
            context={
                "code": submission.code,
                "feedback": {c.kind: c.active_text for c in draft.components},
                "tags": tags,
                "code_pattern": action.code_pattern.to_dict(),
                "feedback_pattern": action.feedback_pattern.to_dict(),
            },
        ))
        return bool(response["matched"])

    def _adapt_action(self, action: RevisionAction, submission: Submission,
                      draft: FeedbackDraft) -> dict:
        request_doc = {
            "origin": "propagation",
            "action": {
                "goal": action.goal,
                "issue_tag": action.issue_tag,
                "old_text": action.old_text,
                "new_text": action.new_text,
                "component": action.component,
            },
        }
        response = self.provider.generate(ProviderRequest(
            task="revise", context=self._revision_context(draft, request_doc),
        ))
        return response

    def propagate(self, action_id: str) -> list[Propagation]:
        with self._lock:
            action = self.state.actions.get(action_id)
            if action is None:
                raise NotFound(f"action {action_id!r} not found")
            created: list[dict] = []
            skipped: list[dict] = []
            coherence_events: list[dict] = []
            next_ordinals = dict(self.state.pair_ordinals)
            counter = self.state.counters["propagations"]
            for sid in self.state.unreviewed_submissions():
                draft = self.state.draft_of(sid)
                submission = self.state.submissions[sid]
                if any(
                    p.action_id == action_id and p.submission_id == sid
                    for p in self.state.propagations.values()
                ):
                    coherence_events.append({
                        "action_id": action_id, "submission_id": sid,
                        "reason": "duplicate_action",
                    })
                    continue
                try:
                    if not self._match_action(action, submission, draft):
                        continue
                    response = self._adapt_action(action, submission, draft)
                except ProviderError as exc:
                    skipped.append({"submission_id": sid, "reason": f"provider_error: {exc}"})
                    logger.warning("propagation to %s skipped: %s", sid, exc)
                    continue
                kind = response["component"]
                component = draft.component(kind)
                if component is None:
                    skipped.append({"submission_id": sid, "reason": "unknown_component"})
                    continue
                edits = sorted(
                    (SpanEdit.from_dict(e) for e in response["edits"]),
                    key=lambda e: (e.start, e.end),
                )
                if not edits:
                    skipped.append({"submission_id": sid, "reason": "no_edit"})
                    continue
                try:
                    validate_edits(edits, len(component.active_text))
                except Exception as exc:
                    skipped.append({"submission_id": sid, "reason": f"invalid_edits: {exc}"})
                    continue
                pending = self.state.pending_propagations_for(sid, kind)
                overlap = any(
                    max(e.start, p_edit.start) < min(e.end, p_edit.end)
                    for p in pending for p_edit in p.suggested.edits for e in edits
                )
                if overlap:
                    coherence_events.append({
                        "action_id": action_id, "submission_id": sid,
                        "reason": "overlap",
                    })
                    continue
                ordinal = next_ordinals.get(sid, 0) + 1
                next_ordinals[sid] = ordinal
                text = component.active_text
                created.append(Propagation(
                    propagation_id=f"{self.session_id}-p{counter}",
                    action_id=action_id,
                    submission_id=sid,
                    draft_id=draft.draft_id,
                    component=kind,
                    ordinal=ordinal,
                    suggested=SpanDiff(
                        component=kind, edits=edits,
                        description=response["description"],
                    ),
                    originals=[text[e.start:e.end] for e in edits],
                    tag_additions=list(response.get("tag_additions", [])),
                ).to_dict())
                counter += 1
            for event in coherence_events:
                self._commit("coherence_skipped", "engine", event)
            self._commit("propagations_materialized", "engine", {
                "action_id": action_id, "propagations": created, "skipped": skipped,
            })
            if created:
                self.resequence("propagation_created")
            return [
                self.state.propagations[p["propagation_id"]] for p in created
            ]

    def _apply_coherence_skipped(self, payload: dict):
        return None

    def _apply_propagations_materialized(self, payload: dict):
        for raw in payload["propagations"]:
            prop = Propagation.from_dict(raw)
            self.state.propagations[prop.propagation_id] = prop
            self.state.pair_ordinals[prop.submission_id] = max(
                self.state.pair_ordinals.get(prop.submission_id, 0), prop.ordinal
            )
            self.state.counters["propagations"] += 1

    def list_propagations(self, submission_id: str) -> list[dict]:
        with self._lock:
            if submission_id not in self.state.submissions:
                raise NotFound(f"submission {submission_id!r} not found")
            out = []
            for prop in self.state.pending_propagations_for(submission_id):
                action = self.state.actions.get(prop.action_id)
                doc = prop.to_dict()
                doc["goal"] = action.goal if action else ""
                doc["anchor_spans"] = [
                    {"start": e.start, "end": e.end} for e in prop.suggested.edits
                ]
                out.append(doc)
            return out

    def decide_propagation(self, propagation_id: str, decision: str) -> Propagation:
        with self._lock:
            if decision not in ("accept", "reject"):
                raise ValidationError(f"decision must be accept or reject, got {decision!r}")
            prop = self.state.propagations.get(propagation_id)
            if prop is None:
                raise NotFound(f"propagation {propagation_id!r} not found")
            if prop.state == "stale":
                raise StalePropagation(
                    f"propagation {propagation_id} is stale; re-run propagate"
                )
            if prop.state != "pending":
                raise AlreadyDecided(f"propagation {propagation_id} is already {prop.state}")
            draft = self.get_draft(prop.draft_id)
            if draft.status in ("validated", "sent"):
                raise ValidationError("validated pairs are never modified by propagation")
            payload: dict = {
                "propagation_id": propagation_id,
                "submission_id": prop.submission_id,
                "decision": decision,
            }
            if decision == "accept":
                component = draft.component(prop.component)
                text = component.active_text
                fresh = all(
                    edit.end <= len(text) and text[edit.start:edit.end] == original
                    for edit, original in zip(prop.suggested.edits, prop.originals)
                )
                if not fresh:
                    self._commit("propagation_stale", "engine", {
                        "propagation_id": propagation_id,
                    })
                    raise StalePropagation(
                        f"propagation {propagation_id} no longer matches the text"
                    )
                payload["resulting_text"] = apply_diff(text, prop.suggested)
            self._commit("propagation_decided", "reviewer", payload)
            return self.state.propagations[propagation_id]

    def _apply_propagation_stale(self, payload: dict):
        self.state.propagations[payload["propagation_id"]].state = "stale"

    def _apply_propagation_decided(self, payload: dict):
        prop = self.state.propagations[payload["propagation_id"]]
        if payload["decision"] == "reject":
            prop.state = "rejected"
            return {}
        prop.state = "accepted"
        draft = self.state.drafts[prop.draft_id]
        return self._apply_component_edit(
            draft, prop.component, prop.suggested.edits, payload["resulting_text"],
            prop.tag_additions, [], exclude_propagation=prop.propagation_id,
        )

    # -- filters ----------------------------------------------------------------------

    def build_predefined_filters(self) -> list[ClusterSummary]:
        with self._lock:
            if not self.state.drafts:
                raise ValidationError("generate drafts before building predefined filters")
            items = [
                (sid, self._embed(sub.code))
                for sid, sub in self.state.submissions.items()
            ]
            groups = greedy_threshold_cluster(items, self.config.cluster_threshold)
            clusters, filters = [], []
            cluster_counter = self.state.counters["clusters"]
            filter_counter = self.state.counters["filters"]
            created_at = format_timestamp(self._now())
            for members in groups:
                tags = sorted({
                    tag
                    for sid in members
                    for component in (self.state.draft_of(sid).components
                                      if self.state.draft_of(sid) else [])
                    for tag in component.issue_tags
                })
                try:
                    summary = self.provider.generate(ProviderRequest(
                        task="summarize_cluster",
                        context={"tags": tags, "size": len(members)},
                    ))["summary"]
                except ProviderError as exc:
                    logger.warning("cluster summary failed: %s", exc)
                    summary = f"{len(members)} submissions (summary unavailable)"
                centroid = list(normalized_mean([
                    self._embed(self.state.submissions[m].code) for m in members
                ]).values)
                cluster_id = f"{self.session_id}-c{cluster_counter}"
                cluster_counter += 1
                clusters.append(ClusterSummary(
                    cluster_id=cluster_id, members=list(members),
                    centroid=centroid, issue_summary=summary,
                ).to_dict())
                filters.append(SemanticFilter(
                    filter_id=f"{self.session_id}-f{filter_counter}",
                    target="code",
                    summary=summary,
                    origin="predefined",
                    active=False,
                    created_at=created_at,
                    cluster_id=cluster_id,
                ).to_dict())
                filter_counter += 1
            self._commit("predefined_filters_built", "engine", {
                "clusters": clusters, "filters": filters,
            })
            return list(self.state.clusters)

    def _apply_predefined_filters_built(self, payload: dict):
        for f in list(self.state.filters.values()):
            if f.origin == "predefined":
                del self.state.filters[f.filter_id]
        new_clusters = [ClusterSummary.from_dict(c) for c in payload["clusters"]]
        self.state.clusters = new_clusters
        self.state.counters["clusters"] += len(new_clusters)
        for raw in payload["filters"]:
            flt = SemanticFilter.from_dict(raw)
            self.state.filters[flt.filter_id] = flt
            self.state.counters["filters"] += 1
        self._match_cache.clear()

    def create_filter_from_selection(self, selection: Selection) -> SemanticFilter:
        with self._lock:
            zero_width = selection.source != "code" and selection.start == selection.end
            if zero_width or not selection.text:
                raise ValidationError("filter selections must be non-empty")
            if selection.source in ("code", "feedback") and not selection.draft_id:
                raise ValidationError("selection needs a draft_id for pair context")
            self._validate_selection(selection)
            draft = (self.get_draft(selection.draft_id)
                     if selection.draft_id else None)
            if draft is None:
                raise ValidationError("filters are created from a pair context")
            submission = self.state.submissions[draft.submission_id]
            try:
                response = self.provider.generate(ProviderRequest(
                    task="interpret_selection",
                    context={
                        "code": submission.code,
                        "exercise_prompt": self.session.exercise_prompt,
                        "feedback": {c.kind: c.active_text for c in draft.components},
                        "selection": selection.to_dict(),
                    },
                ))
            except ProviderError as exc:
                raise FilterCreationFailed(str(exc))
            flt = SemanticFilter(
                filter_id=f"{self.session_id}-f{self.state.counters['filters']}",
                target="code" if selection.source == "code" else "feedback",
                summary=response["summary"],
                origin="user_selection",
                active=True,
                created_at=format_timestamp(self._now()),
                origin_selection=selection,
                issue_tag=response.get("issue_tag"),
            )
            self._commit("filter_created", "reviewer", {"filter": flt.to_dict()})
            self.resequence("filter_changed")
            return self.state.filters[flt.filter_id]

    def create_filter_manual(self, target: str, summary: str,
                             issue_tag: str | None = None) -> SemanticFilter:
        with self._lock:
            if target not in ("code", "feedback"):
                raise ValidationError("filter target must be code or feedback")
            if not summary or not summary.strip():
                raise ValidationError("filter summary must be non-empty")
            flt = SemanticFilter(
                filter_id=f"{self.session_id}-f{self.state.counters['filters']}",
                target=target,
                summary=summary,
                origin="user_manual",
                active=True,
                created_at=format_timestamp(self._now()),
                issue_tag=issue_tag,
            )
            self._commit("filter_created", "reviewer", {"filter": flt.to_dict()})
            self.resequence("filter_changed")
            return self.state.filters[flt.filter_id]

    def _apply_filter_created(self, payload: dict):
        flt = SemanticFilter.from_dict(payload["filter"])
        self.state.filters[flt.filter_id] = flt
        self.state.counters["filters"] += 1

    def set_filter_active(self, filter_id: str, active: bool) -> SemanticFilter:
        with self._lock:
            flt = self.state.filters.get(filter_id)
            if flt is None:
                raise NotFound(f"filter {filter_id!r} not found")
            if flt.active == bool(active):
                return flt
            self._commit("filter_updated", "reviewer", {
                "filter_id": filter_id, "active": bool(active),
            })
            self.resequence("filter_changed")
            return self.state.filters[filter_id]

    def _apply_filter_updated(self, payload: dict):
        self.state.filters[payload["filter_id"]].active = payload["active"]

    def evaluate_filter(self, filter_id: str, submission_id: str) -> FilterMatch:
        with self._lock:
            flt = self.state.filters.get(filter_id)
            if flt is None:
                raise NotFound(f"filter {filter_id!r} not found")
            if submission_id not in self.state.submissions:
                raise NotFound(f"submission {submission_id!r} not found")
            draft = self.state.draft_of(submission_id)
            if draft is None:
                raise ValidationError(f"submission {submission_id} has no draft yet")
            return self._filter_match(flt, submission_id)

    def _invalidate_matches(self, submission_id: str) -> None:
        for key in [k for k in self._match_cache if k[1] == submission_id]:
            del self._match_cache[key]

    def _filter_match(self, flt: SemanticFilter, submission_id: str) -> FilterMatch:
        draft = self.state.draft_of(submission_id)
        version = draft.text_version if draft else -1
        key = (flt.filter_id, submission_id)
        cached = self._match_cache.get(key)
        if cached is not None and cached[0] == version:
            return cached[1]

        if flt.origin == "predefined":
            match = self._predefined_match(flt, submission_id, draft)
        else:
            match = self._semantic_match(flt, submission_id, draft)
        if match.matched is not None:              # unknowns are retried lazily
            self._match_cache[key] = (version, match)
        return match

    def _predefined_match(self, flt, submission_id, draft) -> FilterMatch:
        cluster = next(
            (c for c in self.state.clusters if c.cluster_id == flt.cluster_id), None
        )
        matched = bool(cluster and submission_id in cluster.members)
        code_spans: list[tuple[int, int]] = []
        if matched and draft is not None:
            seen = set()
            for component in draft.components:
                for anchor in component.anchors:
                    span = (anchor.line_start, anchor.line_end)
                    if span not in seen:
                        seen.add(span)
                        code_spans.append(span)
            code_spans.sort()
        return FilterMatch(
            filter_id=flt.filter_id, submission_id=submission_id,
            matched=matched, code_spans=code_spans,
        )

    def _semantic_match(self, flt, submission_id, draft) -> FilterMatch:
        submission = self.state.submissions[submission_id]
        keywords = filter_keywords(
            flt.summary,
            flt.origin_selection.text if flt.origin_selection else None,
            flt.issue_tag,
        )
        pattern = {"description": flt.summary, "keywords": keywords}
        empty = {"description": "", "keywords": []}
        context = {
            "code": submission.code,
            "feedback": {c.kind: c.active_text for c in (draft.components if draft else [])},
            "tags": sorted({t for c in (draft.components if draft else [])
                            for t in c.issue_tags}),
            "code_pattern": pattern if flt.target == "code" else empty,
            "feedback_pattern": pattern if flt.target == "feedback" else empty,
        }
        try:
            response = self.provider.generate(ProviderRequest(
                task="match_pattern", context=context,
            ))
        except ProviderError as exc:
            logger.warning("filter %s evaluation failed: %s", flt.filter_id, exc)
            return FilterMatch(
                filter_id=flt.filter_id, submission_id=submission_id, matched=None,
            )
        matched = bool(response["matched"])
        code_spans = []
        text_spans = []
        if matched:
            if flt.target == "code":
                code_spans = [
                    (int(a), int(b)) for a, b in response.get("code_lines", [])
                ]
            else:
                text_spans = list(response.get("feedback_spans", []))
        return FilterMatch(
            filter_id=flt.filter_id, submission_id=submission_id,
            matched=matched, code_spans=code_spans, text_spans=text_spans,
        )

    def filters_export(self) -> list[dict]:
        with self._lock:
            out = []
            with_drafts = [
                sid for sid in self.state.submissions if self.state.draft_of(sid)
            ]
            for flt in self.state.filters.values():
                doc = flt.to_dict()
                doc["match_count"] = sum(
                    1 for sid in with_drafts
                    if self._filter_match(flt, sid).matched is True
                )
                out.append(doc)
            return out

    # -- queue ---------------------------------------------------------------------------

    def _weights(self) -> QueueWeights:
        return QueueWeights(
            filter_hit=self.config.weight_filter,
            propagation=self.config.weight_propagation,
            similarity=self.config.weight_similarity,
        )

    def _reference_embedding(self) -> EmbeddingVector | None:
        if self.config.similarity_reference == "last_opened":
            ref = self.state.last_opened
        else:
            ref = self.state.reviewed[-1] if self.state.reviewed else None
        if ref is None:
            return None
        return self._embed(self.state.submissions[ref].code)

    def build_queue_entries(self) -> list[QueueEntry]:
        active = [f for f in self.state.filters.values() if f.active]
        reference = self._reference_embedding()
        weights = self._weights()
        entries = []
        for sid in self.state.unreviewed_submissions():
            submission = self.state.submissions[sid]
            hits = sum(
                1 for f in active if self._filter_match(f, sid).matched is True
            )
            pending = len(self.state.pending_propagations_for(sid))
            similarity = (
                cosine(self._embed(submission.code), reference)
                if reference is not None else 0.0
            )
            entries.append(QueueEntry(
                submission_id=sid,
                score=score(hits, len(active), pending, similarity, weights),
                filter_hits=hits,
                pending_propagations=pending,
                similarity_to_last=similarity,
                ingest_ordinal=submission.ingest_ordinal,
            ))
        return entries

    def resequence(self, trigger: str) -> list[str]:
        with self._lock:
            if trigger not in RESEQUENCE_TRIGGERS:
                raise ValidationError(f"unknown resequence trigger {trigger!r}")
            entries = order_entries(self.build_queue_entries())
            order = [e.submission_id for e in entries]
            unchanged = (
                order == self.state.queue_order
                and [e.to_dict() for e in entries]
                == [e.to_dict() for e in self.state.queue_entries]
            )
            if unchanged:
                return list(self.state.queue_order)
            self._commit("queue_resequenced", "engine", {
                "trigger": trigger,
                "order": order,
                "entries": [e.to_dict() for e in entries],
            })
            return list(self.state.queue_order)

    def _apply_queue_resequenced(self, payload: dict):
        self.state.queue_order = list(payload["order"])
        self.state.queue_entries = [
            QueueEntry.from_dict(e) for e in payload["entries"]
        ]

    def queue_view(self) -> list[dict]:
        """Current entries, freshly scored, in the standing queue order."""
        with self._lock:
            entries = {e.submission_id: e for e in self.build_queue_entries()}
            out = []
            for sid in self.state.queue_order:
                if sid in entries:
                    out.append(entries[sid].to_dict())
            return out

    def next_pair(self) -> tuple[Submission, FeedbackDraft]:
        with self._lock:
            if not self.state.queue_order:
                raise QueueExhausted("the review queue is empty")
            sid = self.state.queue_order[0]
            draft = self.state.draft_of(sid)
            self._commit("pair_opened", "reviewer", {
                "submission_id": sid, "draft_id": draft.draft_id,
            })
            return self.state.submissions[sid], self.state.drafts[draft.draft_id]

    def _apply_pair_opened(self, payload: dict):
        sid = payload["submission_id"]
        if sid in self.state.queue_order:
            self.state.queue_order.remove(sid)
        self.state.queue_entries = [
            e for e in self.state.queue_entries if e.submission_id != sid
        ]
        draft = self.state.drafts[payload["draft_id"]]
        draft.status = "in_review"
        self.state.open_pair = sid
        self.state.last_opened = sid

    def validate_pair(self, draft_id: str) -> FeedbackDraft:
        with self._lock:
            draft = self.get_draft(draft_id)
            if not draft.can_transition("validated"):
                raise ValidationError(
                    f"draft {draft_id} is {draft.status}; it must be in review"
                )
            self._commit("pair_validated", "reviewer", {
                "submission_id": draft.submission_id, "draft_id": draft_id,
            })
            self.resequence("pair_reviewed")
            return self.state.drafts[draft_id]

    def _apply_pair_validated(self, payload: dict):
        draft = self.state.drafts[payload["draft_id"]]
        draft.status = "validated"
        sid = payload["submission_id"]
        self.state.reviewed.append(sid)
        if self.state.open_pair == sid:
            self.state.open_pair = None
        for prop in self.state.pending_propagations_for(sid):
            prop.state = "stale"

    def send_feedback(self, draft_id: str) -> FeedbackDraft:
        with self._lock:
            draft = self.get_draft(draft_id)
            if not draft.can_transition("sent"):
                raise ValidationError(
                    f"draft {draft_id} is {draft.status}; validate it before sending"
                )
            self._commit("draft_sent", "reviewer", {
                "submission_id": draft.submission_id, "draft_id": draft_id,
            })
            return self.state.drafts[draft_id]

    def _apply_draft_sent(self, payload: dict):
        self.state.drafts[payload["draft_id"]].status = "sent"

    # -- exports and metrics -----------------------------------------------------------

    def compute_metrics(self) -> dict:
        return compute_metrics(self.events())

    def export_drafts(self) -> list[dict]:
        with self._lock:
            return [d.public_view() for d in self.state.drafts.values()]

    def export_revision_log(self) -> list[dict]:
        with self._lock:
            return [r.to_dict() for r in self.state.revisions.values()]


def _edited_region(pre_text: str, suggestion: SpanDiff) -> tuple[str, str]:
    """The contiguous phrase a diff rewrites, before and after.

    Spanning from the first to the last edit keeps the phrases word-shaped
    even when the differ minimized the edits character by character.
    """
    edits = suggestion.edits
    if not edits:
        return "", ""
    start = edits[0].start
    end = edits[-1].end
    delta = sum(len(e.replacement) - (e.end - e.start) for e in edits)
    post = apply_diff(pre_text, suggestion)
    return pre_text[start:end], post[start:end + delta]


class _NullProvider:
    """Placeholder for replay: replaying never consults a provider."""

    def generate(self, request):  # pragma: no cover - replay must not call this
        raise ProviderUnavailable("replay does not call providers")

    def embed(self, text):  # pragma: no cover
        raise ProviderUnavailable("replay does not call providers")
