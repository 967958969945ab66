"""Cosine scoring and plain top-K ranking (the undebiased retrieval path)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import ImageRecord, QueryRecord
from .errors import DimensionMismatch, EmptyCandidateSet, ZeroNormVector


class ScoredImage(NamedTuple):
    image_id: str
    score: float


@dataclass(frozen=True)
class RetrievalBag:
    """Up to k scored images for one query, score-descending with id tie-breaks."""

    query_id: str
    items: tuple[ScoredImage, ...]
    k: int

    def ids(self) -> list[str]:
        return [item.image_id for item in self.items]


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    na = float(np.sqrt(a @ a))
    nb = float(np.sqrt(b @ b))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormVector("cosine undefined for zero-norm vectors")
    return float(a @ b) / (na * nb)


def score_images(query: QueryRecord, images: Sequence[ImageRecord]) -> np.ndarray:
    """Cosine of the query against every image, in input order."""
    if not images:
        raise EmptyCandidateSet("no candidate images")
    matrix = np.stack([im.embedding for im in images])
    q = query.embedding
    if matrix.shape[1] != q.shape[0]:
        raise DimensionMismatch(
            f"query {query.id!r} has dimension {q.shape[0]}, images have {matrix.shape[1]}")
    norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix))
    qn = float(np.sqrt(q @ q))
    if qn == 0.0 or np.any(norms == 0.0):
        raise ZeroNormVector("zero-norm embedding in scoring")
    return (matrix @ q) / (norms * qn)


def sorted_order(ids: Sequence[str], scores: np.ndarray) -> np.ndarray:
    """Indices sorted by score descending, ties broken by ascending id."""
    return np.lexsort((np.asarray(ids, dtype=object), -scores))


def rank_top_k(query: QueryRecord, images: Sequence[ImageRecord], k: int) -> RetrievalBag:
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = score_images(query, images)
    order = sorted_order([im.id for im in images], scores)[:k]
    items = tuple(ScoredImage(images[i].id, float(scores[i])) for i in order)
    return RetrievalBag(query.id, items, k)
