"""Provider gateway contract: request shape, per-task schemas, validation.

Every text-generation capability the engine needs is one of six tasks. A
provider answers a task with a JSON-able payload whose shape is fixed here,
so the deterministic mock and the remote HTTP provider are interchangeable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

from ..embedding import EmbeddingVector
from ..errors import ProviderProtocolError, ValidationError

TASKS = (
    "generate_components",
    "interpret_selection",
    "revise",
    "extract_action",
    "match_pattern",
    "summarize_cluster",
)

# Context keys each task requires; extra keys are allowed.
REQUIRED_CONTEXT: dict[str, tuple[str, ...]] = {
    "generate_components": ("code", "exercise_prompt", "components"),
    "interpret_selection": ("code", "exercise_prompt", "selection"),
    "revise": ("code", "exercise_prompt", "feedback", "request"),
    "extract_action": ("code", "feedback", "revision"),
    "match_pattern": ("code", "feedback", "tags", "code_pattern", "feedback_pattern"),
    "summarize_cluster": ("tags", "size"),
}


@dataclass(frozen=True)
class ProviderRequest:
    task: str
    context: dict
    abstraction_level: int | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValidationError(f"unknown provider task {self.task!r}")
        missing = [k for k in REQUIRED_CONTEXT[self.task] if k not in self.context]
        if missing:
            raise ValidationError(
                f"task {self.task!r} missing context keys: {', '.join(missing)}"
            )
        if self.abstraction_level is not None and self.abstraction_level not in (1, 2, 3):
            raise ValidationError("abstraction_level must be 1..3")

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "context": self.context,
            "abstraction_level": self.abstraction_level,
        }


@runtime_checkable
class Provider(Protocol):
    """Uniform interface over text generation and embeddings."""

    def generate(self, request: ProviderRequest) -> dict: ...

    def embed(self, text: str) -> EmbeddingVector: ...


def _require(payload: dict, key: str, types, task: str):
    if key not in payload:
        raise ProviderProtocolError(f"{task} response missing {key!r}")
    if types is not None and not isinstance(payload[key], types):
        raise ProviderProtocolError(f"{task} response field {key!r} has wrong type")
    return payload[key]


def validate_response(task: str, payload) -> dict:
    """Check a provider payload against the task's response schema.

    Raises ProviderProtocolError on any shape violation. Returns the payload
    for chaining.
    """
    if not isinstance(payload, dict):
        raise ProviderProtocolError(f"{task} response is not an object")
    if task == "generate_components":
        comps = _require(payload, "components", list, task)
        for comp in comps:
            if not isinstance(comp, dict):
                raise ProviderProtocolError("component entry is not an object")
            _require(comp, "kind", str, task)
            variants = _require(comp, "variants", dict, task)
            if sorted(variants.keys()) != ["1", "2", "3"]:
                raise ProviderProtocolError("component needs variants for levels 1..3")
            _require(comp, "issue_tags", list, task)
            _require(comp, "anchors", list, task)
    elif task == "interpret_selection":
        _require(payload, "summary", str, task)
        _require(payload, "target", str, task)
        if payload["target"] not in ("code", "feedback"):
            raise ProviderProtocolError("interpret_selection target must be code|feedback")
    elif task == "revise":
        _require(payload, "component", str, task)
        edits = _require(payload, "edits", list, task)
        for e in edits:
            if not isinstance(e, dict) or not {"start", "end", "replacement"} <= set(e):
                raise ProviderProtocolError("revise edit entries need start/end/replacement")
        _require(payload, "description", str, task)
        _require(payload, "level_class", str, task)
        if payload["level_class"] not in ("content", "abstraction", "personal"):
            raise ProviderProtocolError("revise level_class invalid")
    elif task == "extract_action":
        _require(payload, "goal", str, task)
        for key in ("code_pattern", "feedback_pattern"):
            pat = _require(payload, key, dict, task)
            if "keywords" not in pat:
                raise ProviderProtocolError(f"{key} needs a keywords list")
    elif task == "match_pattern":
        _require(payload, "matched", bool, task)
    elif task == "summarize_cluster":
        _require(payload, "summary", str, task)
    else:  # pragma: no cover - TASKS is closed
        raise ProviderProtocolError(f"unknown task {task!r}")
    return payload


@dataclass
class CallCounter:
    """Tiny instrumentation hook used by tests to observe provider fan-out."""

    active: int = 0
    peak: int = 0
    total: int = 0
    _log: list = field(default_factory=list)

    def enter(self):
        self.active += 1
        self.total += 1
        self.peak = max(self.peak, self.active)

    def exit(self):
        self.active -= 1
