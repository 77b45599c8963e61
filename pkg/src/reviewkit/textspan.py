"""Span-based text edits: the universal revision representation.

A diff is an ordered list of non-overlapping edits, each replacing a half-open
character range of the pre-edit text. Offsets count Unicode code points.
Applying is done right-to-left so earlier offsets stay valid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from difflib import SequenceMatcher

from .errors import DiffError

Span = tuple[int, int]


@dataclass(frozen=True)
class SpanEdit:
    start: int
    end: int
    replacement: str

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "replacement": self.replacement}

    @classmethod
    def from_dict(cls, d: dict) -> "SpanEdit":
        return cls(int(d["start"]), int(d["end"]), str(d["replacement"]))


@dataclass
class SpanDiff:
    component: str
    edits: list[SpanEdit]
    description: str

    def to_dict(self) -> dict:
        return {
            "component": self.component,
            "edits": [e.to_dict() for e in self.edits],
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpanDiff":
        return cls(
            component=d["component"],
            edits=[SpanEdit.from_dict(e) for e in d["edits"]],
            description=d["description"],
        )

    @property
    def is_empty(self) -> bool:
        return not self.edits


def validate_edits(edits: list[SpanEdit], text_length: int) -> None:
    """Raise DiffError unless edits are sorted, pairwise disjoint and in bounds."""
    prev_end = -1
    prev_start = -1
    for e in edits:
        if e.start > e.end:
            raise DiffError(f"edit span ({e.start}, {e.end}) is inverted")
        if e.start < 0 or e.end > text_length:
            raise DiffError(
                f"edit span ({e.start}, {e.end}) out of bounds for length {text_length}"
            )
        if e.start < prev_end or (e.start == prev_end and e.start == prev_start):
            # Two inserts at the same offset are ambiguous; forbid them too.
            raise DiffError(f"edit at {e.start} overlaps the previous edit")
        prev_end = e.end
        prev_start = e.start


def apply_edits(text: str, edits: list[SpanEdit]) -> str:
    validate_edits(edits, len(text))
    out = text
    for e in reversed(edits):
        out = out[: e.start] + e.replacement + out[e.end :]
    return out


def apply_diff(text: str, diff: SpanDiff) -> str:
    """Pure function; DiffError on overlapping or out-of-bounds edits."""
    return apply_edits(text, diff.edits)


def diff_texts(old: str, new: str) -> list[SpanEdit]:
    """Normalize an arbitrary rewrite into minimal non-overlapping span edits.

    Backed by difflib's matching blocks; used to turn manual edits into the
    same shape as provider suggestions.
    """
    matcher = SequenceMatcher(a=old, b=new, autojunk=False)
    edits: list[SpanEdit] = []
    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag == "equal":
            continue
        edits.append(SpanEdit(i1, i2, new[j1:j2]))
    return edits


def shift_span(span: Span, edits: list[SpanEdit]) -> Span | None:
    """Re-anchor a span through applied edits.

    Returns the shifted span, or None when the span intersects a replaced
    range (the anchored text no longer exists as-is).
    """
    start, end = span
    delta = 0
    for e in edits:
        replaced = e.end - e.start
        inserted = len(e.replacement)
        if e.end <= start:
            if replaced == 0 and e.start == start == end:
                # Insertion exactly at a zero-width span: keep the span before it.
                return (start + delta, end + delta)
            delta += inserted - replaced
            continue
        if e.start >= end:
            break
        return None
    return (start + delta, end + delta)


def _edit_output_ranges(edits: list[SpanEdit]) -> list[Span]:
    """Output-coordinate ranges occupied by each edit's replacement text."""
    ranges = []
    delta = 0
    for e in edits:
        out_start = e.start + delta
        ranges.append((out_start, out_start + len(e.replacement)))
        delta += len(e.replacement) - (e.end - e.start)
    return ranges


def compose_edits(first: list[SpanEdit], second: list[SpanEdit]) -> list[SpanEdit]:
    """Compose two edit lists into one against the original text.

    ``second`` is expressed in the coordinates of the text produced by
    ``first``. Only defined when every edit of ``second`` is disjoint from the
    text ``first`` inserted; otherwise DiffError.
    """
    occupied = _edit_output_ranges(first)

    def to_original(pos: int) -> int:
        delta = 0
        for (os_, oe), e in zip(occupied, first):
            if oe <= pos:
                delta += (e.end - e.start) - len(e.replacement)
                continue
            break
        return pos + delta

    for s in second:
        for os_, oe in occupied:
            if max(s.start, os_) < min(s.end, oe):
                raise DiffError("cannot compose: edit touches previously inserted text")
            if s.start == s.end and os_ < s.start < oe:
                raise DiffError("cannot compose: insertion inside previously inserted text")

    mapped = [
        SpanEdit(to_original(s.start), to_original(s.end), s.replacement)
        for s in second
    ]
    combined = sorted(list(first) + mapped, key=lambda e: (e.start, e.end))
    prev_end = -1
    prev_start = -1
    for e in combined:
        if e.start < prev_end or (e.start == prev_end and e.start == prev_start):
            raise DiffError("cannot compose: spans overlap after offset adjustment")
        prev_end = e.end
        prev_start = e.start
    return combined


@dataclass
class RemapResult:
    """Outcome of re-anchoring spans through an applied edit list."""

    kept: list[tuple[int, Span]] = field(default_factory=list)   # (index, new span)
    dropped: list[int] = field(default_factory=list)             # indices


def remap_spans(spans: list[Span], edits: list[SpanEdit]) -> RemapResult:
    result = RemapResult()
    for i, span in enumerate(spans):
        shifted = shift_span(span, edits)
        if shifted is None:
            result.dropped.append(i)
        else:
            result.kept.append((i, shifted))
    return result
