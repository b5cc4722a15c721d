"""Linear scoring model and deterministic ranking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Query


@dataclass(frozen=True)
class LinearRanker:
    """A linear ranker scoring documents by the inner product with `weights`."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("weights must be a 1-d vector")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "weights", w)

    @staticmethod
    def zeros(feature_dim: int) -> "LinearRanker":
        return LinearRanker(np.zeros(feature_dim))


@dataclass(frozen=True)
class RankedList:
    """A ranking of one query's documents.

    ``order[i]`` is the document index placed at position i+1 (positions are
    1-based, position 1 is best). ``positions`` is the inverse permutation:
    ``positions[d]`` is the 1-based position of document d.
    """

    order: np.ndarray
    positions: np.ndarray


def score(ranker: LinearRanker, features: np.ndarray) -> float:
    """Inner product of the ranker weights with one feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape != ranker.weights.shape:
        raise ValueError(
            f"dimension mismatch: weights {ranker.weights.shape} vs features {x.shape}"
        )
    return float(ranker.weights @ x)


def rank(ranker: LinearRanker, query: Query) -> RankedList:
    """Rank a query's documents by score, descending.

    Ties break by ascending document index, so the permutation is
    deterministic and invariant to positive rescaling of the weights.
    """
    scores = query.features @ ranker.weights
    order = np.argsort(-scores, kind="stable")
    positions = np.empty(query.n_docs, dtype=np.int64)
    positions[order] = np.arange(1, query.n_docs + 1)
    return RankedList(order=order, positions=positions)
