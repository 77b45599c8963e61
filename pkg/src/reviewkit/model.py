"""Domain types: sessions, submissions, drafts, filters, revisions, propagations.

Everything here serializes to plain JSON-able dicts; the engine persists these
shapes inside event payloads and rebuilds them on replay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import EngineConfig
from .errors import ValidationError
from .textspan import SpanDiff

COMPONENT_KINDS = ("Issue", "Strategy", "Solution", "Example", "NextStep")
ABSTRACTION_LEVELS = (1, 2, 3)

DRAFT_STATUSES = ("unreviewed", "in_review", "validated", "sent")
# Allowed forward transitions of a draft through review.
_STATUS_NEXT = {
    "unreviewed": "in_review",
    "in_review": "validated",
    "validated": "sent",
}

SELECTION_SOURCES = ("exercise_prompt", "code", "feedback")
SHORTCUTS = ("mention_issue", "fix_error", "expand", "remove")
REVISION_ORIGINS = ("in_situ", "general", "manual", "slider")
LEVEL_CLASSES = ("content", "abstraction", "personal")
FILTER_ORIGINS = ("predefined", "user_selection", "user_manual")


@dataclass(frozen=True)
class Session:
    session_id: str
    exercise_prompt: str
    created_at: str                      # ISO-8601 UTC, millisecond precision
    config: EngineConfig

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "exercise_prompt": self.exercise_prompt,
            "created_at": self.created_at,
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Session":
        return cls(
            session_id=d["session_id"],
            exercise_prompt=d["exercise_prompt"],
            created_at=d["created_at"],
            config=EngineConfig.from_dict(d["config"]),
        )


@dataclass(frozen=True)
class Submission:
    submission_id: str
    student_ref: str
    code: str
    language_tag: str
    severity: float
    ingest_ordinal: int

    @property
    def line_count(self) -> int:
        return self.code.count("\n") + 1

    def to_dict(self) -> dict:
        return {
            "submission_id": self.submission_id,
            "student_ref": self.student_ref,
            "code": self.code,
            "language_tag": self.language_tag,
            "severity": self.severity,
            "ingest_ordinal": self.ingest_ordinal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Submission":
        return cls(
            submission_id=d["submission_id"],
            student_ref=d["student_ref"],
            code=d["code"],
            language_tag=d["language_tag"],
            severity=float(d["severity"]),
            ingest_ordinal=int(d["ingest_ordinal"]),
        )


@dataclass(frozen=True)
class FeedbackTemplate:
    enabled_components: tuple[str, ...] = COMPONENT_KINDS
    default_abstraction: int = 2

    def __post_init__(self):
        if not self.enabled_components:
            raise ValidationError("template must enable at least one component")
        seen = set()
        for kind in self.enabled_components:
            if kind not in COMPONENT_KINDS:
                raise ValidationError(f"unknown feedback component {kind!r}")
            if kind in seen:
                raise ValidationError(f"duplicate feedback component {kind!r}")
            seen.add(kind)
        if self.default_abstraction not in ABSTRACTION_LEVELS:
            raise ValidationError("default_abstraction must be 1, 2 or 3")

    def to_dict(self) -> dict:
        return {
            "enabled_components": list(self.enabled_components),
            "default_abstraction": self.default_abstraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackTemplate":
        return cls(tuple(d["enabled_components"]), int(d.get("default_abstraction", 2)))


@dataclass
class Anchor:
    """Ties a region of the student's code to a sentence of the feedback.

    Code lines are 1-based inclusive; text spans are half-open character
    offsets, kept per abstraction level (a sentence sits at different offsets
    in each variant, and may be absent from the conceptual one).
    """

    line_start: int
    line_end: int
    spans: dict[int, tuple[int, int] | None]

    def span_at(self, level: int) -> tuple[int, int] | None:
        return self.spans.get(level)

    def to_dict(self) -> dict:
        return {
            "line_start": self.line_start,
            "line_end": self.line_end,
            "spans": {str(k): (list(v) if v is not None else None)
                      for k, v in sorted(self.spans.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Anchor":
        spans = {}
        for k, v in d["spans"].items():
            spans[int(k)] = None if v is None else (int(v[0]), int(v[1]))
        return cls(int(d["line_start"]), int(d["line_end"]), spans)

    def public_view(self, level: int) -> dict | None:
        span = self.span_at(level)
        if span is None:
            return None
        return {
            "line_start": self.line_start,
            "line_end": self.line_end,
            "span": [span[0], span[1]],
        }


@dataclass
class FeedbackComponent:
    kind: str
    variants: dict[int, str]             # generated texts, never mutated
    texts: dict[int, str]                # current text per level
    active_level: int
    issue_tags: list[str]                # sorted; shared by all three variants
    anchors: list[Anchor]
    text_version: int = 0

    @property
    def active_text(self) -> str:
        return self.texts[self.active_level]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "variants": {str(k): v for k, v in sorted(self.variants.items())},
            "texts": {str(k): v for k, v in sorted(self.texts.items())},
            "active_level": self.active_level,
            "issue_tags": list(self.issue_tags),
            "anchors": [a.to_dict() for a in self.anchors],
            "text_version": self.text_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackComponent":
        return cls(
            kind=d["kind"],
            variants={int(k): v for k, v in d["variants"].items()},
            texts={int(k): v for k, v in d["texts"].items()},
            active_level=int(d["active_level"]),
            issue_tags=list(d["issue_tags"]),
            anchors=[Anchor.from_dict(a) for a in d["anchors"]],
            text_version=int(d.get("text_version", 0)),
        )

    def public_view(self) -> dict:
        anchors = []
        for a in self.anchors:
            view = a.public_view(self.active_level)
            if view is not None:
                anchors.append(view)
        return {
            "kind": self.kind,
            "active_level": self.active_level,
            "text": self.active_text,
            "variants": {str(k): v for k, v in sorted(self.texts.items())},
            "issue_tags": list(self.issue_tags),
            "anchors": anchors,
        }


@dataclass
class FeedbackDraft:
    draft_id: str
    submission_id: str
    components: list[FeedbackComponent]
    status: str = "unreviewed"

    def component(self, kind: str) -> FeedbackComponent | None:
        for c in self.components:
            if c.kind == kind:
                return c
        return None

    @property
    def text_version(self) -> int:
        return sum(c.text_version for c in self.components)

    def assembled_text(self) -> str:
        """Final feedback: active variants in template order, blank-line separated."""
        return "\n\n".join(c.active_text for c in self.components)

    def can_transition(self, new_status: str) -> bool:
        return _STATUS_NEXT.get(self.status) == new_status

    def to_dict(self) -> dict:
        return {
            "draft_id": self.draft_id,
            "submission_id": self.submission_id,
            "components": [c.to_dict() for c in self.components],
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackDraft":
        return cls(
            draft_id=d["draft_id"],
            submission_id=d["submission_id"],
            components=[FeedbackComponent.from_dict(c) for c in d["components"]],
            status=d["status"],
        )

    def public_view(self) -> dict:
        return {
            "draft_id": self.draft_id,
            "submission_id": self.submission_id,
            "status": self.status,
            "components": [c.public_view() for c in self.components],
            "assembled_text": self.assembled_text(),
        }


@dataclass(frozen=True)
class Selection:
    """A reviewer highlight. Code selections use 1-based inclusive line ranges;
    prompt and feedback selections use half-open character offsets."""

    source: str
    start: int
    end: int
    text: str
    draft_id: str | None = None
    component: str | None = None         # required when source == "feedback"

    def __post_init__(self):
        if self.source not in SELECTION_SOURCES:
            raise ValidationError(f"unknown selection source {self.source!r}")
        if self.source == "feedback" and not self.component:
            raise ValidationError("feedback selections must name a component")

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "start": self.start,
            "end": self.end,
            "text": self.text,
            "draft_id": self.draft_id,
            "component": self.component,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Selection":
        return cls(
            source=d["source"],
            start=int(d["start"]),
            end=int(d["end"]),
            text=d["text"],
            draft_id=d.get("draft_id"),
            component=d.get("component"),
        )


@dataclass
class RevisionOutcome:
    revision_id: str
    draft_id: str
    component: str
    origin: str
    shortcut: str | None
    level_class: str
    suggestion: SpanDiff
    state: str = "pending"               # pending | accepted | dismissed
    resulting_text: str | None = None
    tag_additions: list[str] = field(default_factory=list)
    tag_removals: list[str] = field(default_factory=list)
    issue_tag: str | None = None
    selection: Selection | None = None
    query_text: str | None = None
    old_text: str = ""                   # pre-edit slices the suggestion replaces
    new_text: str = ""                   # replacement text the suggestion introduces

    def to_dict(self) -> dict:
        return {
            "revision_id": self.revision_id,
            "draft_id": self.draft_id,
            "component": self.component,
            "origin": self.origin,
            "shortcut": self.shortcut,
            "level_class": self.level_class,
            "suggestion": self.suggestion.to_dict(),
            "state": self.state,
            "resulting_text": self.resulting_text,
            "tag_additions": list(self.tag_additions),
            "tag_removals": list(self.tag_removals),
            "issue_tag": self.issue_tag,
            "selection": self.selection.to_dict() if self.selection else None,
            "query_text": self.query_text,
            "old_text": self.old_text,
            "new_text": self.new_text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RevisionOutcome":
        return cls(
            revision_id=d["revision_id"],
            draft_id=d["draft_id"],
            component=d["component"],
            origin=d["origin"],
            shortcut=d.get("shortcut"),
            level_class=d["level_class"],
            suggestion=SpanDiff.from_dict(d["suggestion"]),
            state=d["state"],
            resulting_text=d.get("resulting_text"),
            tag_additions=list(d.get("tag_additions", [])),
            tag_removals=list(d.get("tag_removals", [])),
            issue_tag=d.get("issue_tag"),
            selection=Selection.from_dict(d["selection"]) if d.get("selection") else None,
            query_text=d.get("query_text"),
            old_text=d.get("old_text", ""),
            new_text=d.get("new_text", ""),
        )


@dataclass
class SemanticFilter:
    filter_id: str
    target: str                          # "code" | "feedback"
    summary: str
    origin: str
    active: bool
    created_at: str
    origin_selection: Selection | None = None
    issue_tag: str | None = None         # mock matcher ground truth
    cluster_id: str | None = None        # set for predefined filters

    def __post_init__(self):
        if not self.summary:
            raise ValidationError("filter summary must be non-empty")
        if self.origin == "predefined" and self.target != "code":
            raise ValidationError("predefined filters target code")

    def to_dict(self) -> dict:
        return {
            "filter_id": self.filter_id,
            "target": self.target,
            "summary": self.summary,
            "origin": self.origin,
            "active": self.active,
            "created_at": self.created_at,
            "origin_selection": self.origin_selection.to_dict() if self.origin_selection else None,
            "issue_tag": self.issue_tag,
            "cluster_id": self.cluster_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SemanticFilter":
        return cls(
            filter_id=d["filter_id"],
            target=d["target"],
            summary=d["summary"],
            origin=d["origin"],
            active=bool(d["active"]),
            created_at=d["created_at"],
            origin_selection=Selection.from_dict(d["origin_selection"])
            if d.get("origin_selection") else None,
            issue_tag=d.get("issue_tag"),
            cluster_id=d.get("cluster_id"),
        )


@dataclass
class FilterMatch:
    filter_id: str
    submission_id: str
    matched: bool | None                 # None = unknown (provider failed)
    code_spans: list[tuple[int, int]] = field(default_factory=list)
    text_spans: list[dict] = field(default_factory=list)  # {component, start, end, strength}

    def to_dict(self) -> dict:
        return {
            "filter_id": self.filter_id,
            "submission_id": self.submission_id,
            "matched": self.matched,
            "code_spans": [list(s) for s in self.code_spans],
            "text_spans": list(self.text_spans),
        }


@dataclass
class ClusterSummary:
    cluster_id: str
    members: list[str]
    centroid: list[float]
    issue_summary: str

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "members": list(self.members),
            "centroid": list(self.centroid),
            "issue_summary": self.issue_summary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterSummary":
        return cls(
            cluster_id=d["cluster_id"],
            members=list(d["members"]),
            centroid=[float(x) for x in d["centroid"]],
            issue_summary=d["issue_summary"],
        )


@dataclass(frozen=True)
class Pattern:
    description: str = ""
    keywords: tuple[str, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.description and not self.keywords

    def to_dict(self) -> dict:
        return {"description": self.description, "keywords": list(self.keywords)}

    @classmethod
    def from_dict(cls, d: dict) -> "Pattern":
        return cls(d.get("description", ""), tuple(d.get("keywords", ())))


@dataclass
class RevisionAction:
    action_id: str
    source_revision_id: str
    goal: str
    code_pattern: Pattern
    feedback_pattern: Pattern
    created_at: str
    issue_tag: str | None = None
    old_text: str = ""                   # phrase the revision replaced, if any
    new_text: str = ""                   # phrase the revision introduced, if any
    component: str = "Issue"

    def __post_init__(self):
        if not self.goal:
            raise ValidationError("action goal must be non-empty")
        if self.code_pattern.is_empty and self.feedback_pattern.is_empty:
            raise ValidationError("action needs at least one non-empty pattern")

    def to_dict(self) -> dict:
        return {
            "action_id": self.action_id,
            "source_revision_id": self.source_revision_id,
            "goal": self.goal,
            "code_pattern": self.code_pattern.to_dict(),
            "feedback_pattern": self.feedback_pattern.to_dict(),
            "created_at": self.created_at,
            "issue_tag": self.issue_tag,
            "old_text": self.old_text,
            "new_text": self.new_text,
            "component": self.component,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RevisionAction":
        return cls(
            action_id=d["action_id"],
            source_revision_id=d["source_revision_id"],
            goal=d["goal"],
            code_pattern=Pattern.from_dict(d["code_pattern"]),
            feedback_pattern=Pattern.from_dict(d["feedback_pattern"]),
            created_at=d["created_at"],
            issue_tag=d.get("issue_tag"),
            old_text=d.get("old_text", ""),
            new_text=d.get("new_text", ""),
            component=d.get("component", "Issue"),
        )


@dataclass
class Propagation:
    propagation_id: str
    action_id: str
    submission_id: str
    draft_id: str
    component: str
    ordinal: int
    suggested: SpanDiff
    originals: list[str]                 # pre-edit slices, for staleness checks
    state: str = "pending"               # pending | accepted | rejected | stale
    tag_additions: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "propagation_id": self.propagation_id,
            "action_id": self.action_id,
            "submission_id": self.submission_id,
            "draft_id": self.draft_id,
            "component": self.component,
            "ordinal": self.ordinal,
            "suggested": self.suggested.to_dict(),
            "originals": list(self.originals),
            "state": self.state,
            "tag_additions": list(self.tag_additions),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Propagation":
        return cls(
            propagation_id=d["propagation_id"],
            action_id=d["action_id"],
            submission_id=d["submission_id"],
            draft_id=d["draft_id"],
            component=d["component"],
            ordinal=int(d["ordinal"]),
            suggested=SpanDiff.from_dict(d["suggested"]),
            originals=list(d["originals"]),
            state=d["state"],
            tag_additions=list(d.get("tag_additions", [])),
        )


@dataclass
class QueueEntry:
    submission_id: str
    score: float
    filter_hits: int
    pending_propagations: int
    similarity_to_last: float
    ingest_ordinal: int

    def to_dict(self) -> dict:
        return {
            "submission_id": self.submission_id,
            "score": self.score,
            "filter_hits": self.filter_hits,
            "pending_propagations": self.pending_propagations,
            "similarity_to_last": self.similarity_to_last,
            "ingest_ordinal": self.ingest_ordinal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QueueEntry":
        return cls(
            submission_id=d["submission_id"],
            score=float(d["score"]),
            filter_hits=int(d["filter_hits"]),
            pending_propagations=int(d["pending_propagations"]),
            similarity_to_last=float(d["similarity_to_last"]),
            ingest_ordinal=int(d["ingest_ordinal"]),
        )
