"""Feedback draft assembly.

Turns a provider's generate_components payload into a FeedbackDraft, enforcing
the structural invariants the rest of the system leans on: one component per
enabled template kind in template order, exactly three variants each, one
shared tag set, and anchors that stay inside their text and code bounds.
"""

from __future__ import annotations

from .errors import ProviderProtocolError
from .model import (
    ABSTRACTION_LEVELS,
    Anchor,
    FeedbackComponent,
    FeedbackDraft,
    FeedbackTemplate,
    Submission,
)
from .providers.base import ProviderRequest


def generation_request(submission: Submission, template: FeedbackTemplate,
                       exercise_prompt: str) -> ProviderRequest:
    return ProviderRequest(
        task="generate_components",
        context={
            "code": submission.code,
            "exercise_prompt": exercise_prompt,
            "components": list(template.enabled_components),
            "language_tag": submission.language_tag,
        },
    )


def _parse_anchor(raw: dict, variant_texts: dict[int, str],
                  line_count: int) -> Anchor:
    line_start = int(raw["line_start"])
    line_end = int(raw["line_end"])
    if not (1 <= line_start <= line_end <= line_count):
        raise ProviderProtocolError(
            f"anchor lines ({line_start}, {line_end}) exceed the {line_count}-line code"
        )
    spans: dict[int, tuple[int, int] | None] = {}
    for level in ABSTRACTION_LEVELS:
        value = raw["spans"].get(str(level))
        if value is None:
            spans[level] = None
            continue
        start, end = int(value[0]), int(value[1])
        if not (0 <= start <= end <= len(variant_texts[level])):
            raise ProviderProtocolError(
                f"anchor span ({start}, {end}) outside level-{level} variant"
            )
        spans[level] = (start, end)
    return Anchor(line_start=line_start, line_end=line_end, spans=spans)


def build_draft(draft_id: str, submission: Submission, template: FeedbackTemplate,
                payload: dict) -> FeedbackDraft:
    raw_components = payload["components"]
    by_kind = {c["kind"]: c for c in raw_components}
    if list(by_kind) != list(template.enabled_components):
        raise ProviderProtocolError(
            "provider returned components "
            f"{list(by_kind)} for template {list(template.enabled_components)}"
        )
    components = []
    for kind in template.enabled_components:
        raw = by_kind[kind]
        variants = {int(k): str(v) for k, v in raw["variants"].items()}
        tags = sorted(set(raw["issue_tags"]))
        anchors = [
            _parse_anchor(a, variants, submission.line_count) for a in raw["anchors"]
        ]
        components.append(FeedbackComponent(
            kind=kind,
            variants=dict(variants),
            texts=dict(variants),
            active_level=template.default_abstraction,
            issue_tags=tags,
            anchors=anchors,
        ))
    return FeedbackDraft(
        draft_id=draft_id,
        submission_id=submission.submission_id,
        components=components,
        status="unreviewed",
    )


def render_grid(draft: FeedbackDraft, kind: str) -> list[dict]:
    """All three variants of one component, labeled by level; never mutates."""
    component = draft.component(kind)
    if component is None:
        from .errors import NotFound
        raise NotFound(f"draft {draft.draft_id} has no {kind} component")
    return [
        {"level": level, "text": component.texts[level]}
        for level in ABSTRACTION_LEVELS
    ]
