"""Hashed bag-of-tokens embeddings and cosine similarity.

Deterministic, order-insensitive and cheap: tokenize on non-alphanumerics,
hash each token into a fixed number of buckets with FNV-1a, count, then
L2-normalize. Empty input embeds to a zero vector flagged empty.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import DimensionError

_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def fnv1a(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    empty: bool = False

    @property
    def dim(self) -> int:
        return len(self.values)

    def to_dict(self) -> dict:
        return {"values": list(self.values), "empty": self.empty}

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingVector":
        return cls(tuple(float(v) for v in d["values"]), bool(d.get("empty", False)))


def embed_text(text: str, dim: int = 256) -> EmbeddingVector:
    tokens = tokenize(text)
    if not tokens:
        return EmbeddingVector(values=(0.0,) * dim, empty=True)
    counts = [0.0] * dim
    for tok in tokens:
        counts[fnv1a(tok) % dim] += 1.0
    norm = math.sqrt(sum(c * c for c in counts))
    return EmbeddingVector(values=tuple(c / norm for c in counts), empty=False)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Standard cosine in [-1, 1]; zero vectors compare as 0 by convention."""
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} != {b.dim}")
    na = math.sqrt(sum(v * v for v in a.values))
    nb = math.sqrt(sum(v * v for v in b.values))
    if na == 0.0 or nb == 0.0:
        return 0.0
    dot = sum(x * y for x, y in zip(a.values, b.values))
    return max(-1.0, min(1.0, dot / (na * nb)))


def normalized_mean(vectors: list[EmbeddingVector]) -> EmbeddingVector:
    """L2-normalized mean of same-dimension vectors (cluster centroid)."""
    if not vectors:
        raise DimensionError("cannot average zero vectors")
    dim = vectors[0].dim
    acc = [0.0] * dim
    for v in vectors:
        if v.dim != dim:
            raise DimensionError(f"dimension mismatch: {v.dim} != {dim}")
        for i, x in enumerate(v.values):
            acc[i] += x
    n = len(vectors)
    mean = [x / n for x in acc]
    norm = math.sqrt(sum(x * x for x in mean))
    if norm == 0.0:
        return EmbeddingVector(values=tuple(mean), empty=True)
    return EmbeddingVector(values=tuple(x / norm for x in mean), empty=False)
