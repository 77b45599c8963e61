"""Queue scoring and ordering.

Score favors filter hits first, then pending propagated revisions, then
code similarity to the most recently reviewed pair, so the head of the queue
is the pair the reviewer can judge with the least mental context switch.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import QueueEntry

# Normalizing by more than this many active filters would let similarity
# outrank a filter hit; the cap keeps filter hits dominant.
FILTER_NORMALIZATION_CAP = 10


@dataclass(frozen=True)
class QueueWeights:
    filter_hit: float = 10.0
    propagation: float = 5.0
    similarity: float = 1.0


def score(filter_hits: int, active_filter_count: int, pending_propagations: int,
          similarity_to_last: float, weights: QueueWeights) -> float:
    denominator = max(1, min(active_filter_count, FILTER_NORMALIZATION_CAP))
    return (
        weights.filter_hit * (filter_hits / denominator)
        + weights.propagation * min(1, pending_propagations)
        + weights.similarity * similarity_to_last
    )


def order_entries(entries: list[QueueEntry]) -> list[QueueEntry]:
    """Sort by score descending, ties by ingest ordinal ascending.

    sorted() is stable, but the key makes the order independent of the input
    order entirely, so evaluation timing can never leak into the result.
    """
    return sorted(entries, key=lambda e: (-e.score, e.ingest_ordinal))
