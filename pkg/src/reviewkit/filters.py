"""Semantic filters: greedy threshold clustering and match evaluation helpers."""

from __future__ import annotations

from .embedding import EmbeddingVector, cosine, normalized_mean
from .providers.mock import keyword_tokens


def greedy_threshold_cluster(
    items: list[tuple[str, EmbeddingVector]], threshold: float
) -> list[list[str]]:
    """Assign each item (in order) to the first cluster whose centroid cosine
    reaches the threshold, else open a new cluster. Deterministic given order.
    """
    clusters: list[list[str]] = []
    member_vectors: list[list[EmbeddingVector]] = []
    centroids: list[EmbeddingVector] = []
    for item_id, vector in items:
        placed = False
        for i, centroid in enumerate(centroids):
            if cosine(centroid, vector) >= threshold:
                clusters[i].append(item_id)
                member_vectors[i].append(vector)
                centroids[i] = normalized_mean(member_vectors[i])
                placed = True
                break
        if not placed:
            clusters.append([item_id])
            member_vectors.append([vector])
            centroids.append(vector)
    return clusters


def cluster_centroid(vectors: list[EmbeddingVector]) -> EmbeddingVector:
    return normalized_mean(vectors)


def filter_keywords(summary: str, selection_text: str | None,
                    issue_tag: str | None) -> list[str]:
    """The keyword set a filter matches with when it has no rule tag."""
    if issue_tag:
        return [issue_tag]
    if selection_text:
        return keyword_tokens(selection_text)
    return keyword_tokens(summary)
