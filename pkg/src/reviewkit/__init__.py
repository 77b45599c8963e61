"""reviewkit: orchestrates human validation of generated programming feedback.

Drafts are generated per submission from a component template, reviewer
attention (highlights, accepted edits) becomes semantic filters and reusable
revision actions, the review queue is resequenced to keep similar pairs
adjacent, and accepted revisions propagate to matching unreviewed pairs.
"""

from .config import EngineConfig, load_config
from .engine import ReviewEngine, SessionState
from .model import (
    FeedbackDraft,
    FeedbackTemplate,
    Selection,
    SemanticFilter,
    Submission,
)
from .store import SessionStore
from .textspan import SpanDiff, SpanEdit, apply_diff, diff_texts

__version__ = "0.1.0"

__all__ = [
    "EngineConfig",
    "load_config",
    "ReviewEngine",
    "SessionState",
    "SessionStore",
    "FeedbackDraft",
    "FeedbackTemplate",
    "Selection",
    "SemanticFilter",
    "Submission",
    "SpanDiff",
    "SpanEdit",
    "apply_diff",
    "diff_texts",
]
