"""Hinge-based rank surrogate, the propensity-weighted client loss, and
exact subgradients for linear rankers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .clicksim import ClickRecord
from .dataset import Query
from .ranker import LinearRanker

# Maps (record, 1-based display position) to that click's propensity.
PropensityProvider = Callable[[ClickRecord, int], float]


@dataclass(frozen=True)
class ClientLossContext:
    """Everything needed to evaluate one client's loss on one round of
    records: the model, (record, query) pairs, and a propensity provider."""

    model: LinearRanker
    records: tuple
    propensity_provider: PropensityProvider


def hinge_sum(model: LinearRanker, query: Query, d: int) -> float:
    """Sum over the query's other documents of max(0, 1 - score margin).

    The margin is f(d) - f(d'); the self pair is excluded. Zero when d
    beats every other document by at least 1.
    """
    scores = query.features @ model.weights
    margins = 1.0 - (scores[d] - scores)
    margins[d] = 0.0
    return float(np.sum(np.maximum(margins, 0.0)))


def rank_upper_bound(model: LinearRanker, query: Query, d: int) -> float:
    """1 + hinge_sum: a differentiable upper bound on d's rank under the
    model. Tight (= 1) when d wins every pairwise margin by at least 1."""
    return 1.0 + hinge_sum(model, query, d)


def click_gradient(
    model: LinearRanker, query: Query, d: int, propensity: float
) -> np.ndarray:
    """Subgradient of hinge_sum(model, query, d) / propensity in the model
    weights. Pairs exactly at the hinge kink contribute zero."""
    if propensity <= 0.0:
        raise ValueError("propensity must be positive")
    scores = query.features @ model.weights
    margins = 1.0 - (scores[d] - scores)
    active = margins > 0.0
    active[d] = False
    n_active = int(np.count_nonzero(active))
    if n_active == 0:
        return np.zeros(query.features.shape[1])
    summed = np.sum(query.features[active], axis=0)
    return -(n_active * query.features[d] - summed) / propensity


def client_loss(ctx: ClientLossContext) -> float:
    """Propensity-weighted hinge loss over the round's clicked documents.

    Sums hinge_sum / p over clicks, then divides by the number of distinct
    queries that received at least one click. Zero when nothing was clicked.
    """
    total = 0.0
    clicked_qids = set()
    for record, query in ctx.records:
        clicked_positions = np.nonzero(record.clicks)[0]
        if clicked_positions.size == 0:
            continue
        clicked_qids.add(record.query_id)
        for j in clicked_positions:
            p = float(ctx.propensity_provider(record, int(j) + 1))
            if p <= 0.0:
                raise ValueError("clicked document has non-positive propensity")
            total += hinge_sum(ctx.model, query, int(record.displayed[j])) / p
    if not clicked_qids:
        return 0.0
    return total / len(clicked_qids)
