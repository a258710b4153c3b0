"""Group candidate sets, fuzzy capacities, Choquet aggregation and the group top-N list."""

import logging
import math
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from app.core.utils import descending_order
from app.schemas.dataset import GroupSpec
from app.schemas.enums import Provenance
from app.schemas.group import CandidateConfig, GroupRecommendation
from app.services.dataset_service import RatingMatrix
from app.services.prediction_service import PredictionMatrix

logger = logging.getLogger(__name__)


def top_n_items(u: int, n: int, pm: PredictionMatrix) -> list[int]:
    """The n items with the largest effective rating for u (missing cells excluded), ties by item-id."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    values = pm.row(u)
    present = ~np.isnan(values)
    items = pm.item_ids[present]
    order = descending_order(values[present], items)
    return [int(i) for i in items[order[:n]]]


def _borda_points(g: GroupSpec, pm: PredictionMatrix) -> np.ndarray:
    """Summed Borda points per pm item; every member ranks all items as a total order."""
    n = pm.n_items
    points = np.zeros(n, dtype=np.int64)
    for u in g.members:
        values = pm.row(u)
        # missing cells rank after every rated one, then by item-id
        keys = np.where(np.isnan(values), -np.inf, values)
        order = descending_order(keys, pm.item_ids)
        rank = np.empty(n, dtype=np.int64)
        rank[order] = np.arange(1, n + 1)
        points += n - rank + 1
    return points


def borda_scores(g: GroupSpec, pm: PredictionMatrix) -> dict[int, int]:
    points = _borda_points(g, pm)
    return {int(i): int(p) for i, p in zip(pm.item_ids, points)}


def extended_candidates(g: GroupSpec, pm: PredictionMatrix, cfg: CandidateConfig) -> list[int]:
    """
    Union of every member's top-n_filter items with the n_borda best Borda items.

    Returns:
        Candidate item-ids in ascending order
    """
    candidates: set[int] = set()
    for u in g.members:
        candidates.update(top_n_items(u, cfg.n_filter, pm))
    if cfg.n_borda > 0:
        order = descending_order(_borda_points(g, pm).astype(np.float64), pm.item_ids)
        candidates.update(int(i) for i in pm.item_ids[order[:cfg.n_borda]])
    return sorted(candidates)


def _global_weight(m: RatingMatrix, u: int) -> float:
    return m.user_counts[m.user_index(u)] / m.n_items if m.n_items else 0.0


def _median_bias(m: RatingMatrix, u: int) -> float:
    """(#ratings above the median - #ratings below it) / |I_u|; 0 without ratings."""
    ratings = m.ratings_of(u)
    if ratings.size == 0:
        return 0.0
    median = np.median(ratings)
    return float((np.count_nonzero(ratings > median) - np.count_nonzero(ratings < median)) / ratings.size)


class FuzzyCapacity:
    """
    Capacity over subsets of a group built from training activity.

    Each member u contributes c_u = w_u + bias_u, where w_u is the global
    weight |I_u| / |I| renormalised over the group when the group's total
    is below 1. A subset A gets min(1, sum of positive c_u over A), the
    smallest monotone [0, 1] envelope of the additive raw values; the empty
    set gets 0 and the whole group 1.
    """

    def __init__(
        self,
        members: Sequence[int],
        global_weights: Mapping[int, float],
        biases: Mapping[int, float],
    ) -> None:
        self.members = tuple(sorted(int(u) for u in members))
        if not self.members:
            raise ValueError("a capacity needs at least one member")
        self.global_weights = {u: float(global_weights[u]) for u in self.members}
        self.biases = {u: float(biases[u]) for u in self.members}

        total = math.fsum(self.global_weights.values())
        if 0 < total < 1:
            self.weights = {u: w / total for u, w in self.global_weights.items()}
        else:
            self.weights = dict(self.global_weights)
        self.contributions = {u: self.weights[u] + self.biases[u] for u in self.members}
        self._restricted: dict[frozenset[int], "FuzzyCapacity"] = {}

    @classmethod
    def from_training(cls, members: Sequence[int], m: RatingMatrix) -> "FuzzyCapacity":
        members = [int(u) for u in members]
        weights = {u: _global_weight(m, u) for u in members}
        biases = {u: _median_bias(m, u) for u in members}
        return cls(members, weights, biases)

    def raw(self, subset: Iterable[int]) -> float:
        """Additive value before clamping and the monotone envelope."""
        return math.fsum(self.contributions[int(u)] for u in subset)

    def __call__(self, subset: Iterable[int]) -> float:
        subset = {int(u) for u in subset}
        unknown = subset.difference(self.members)
        if unknown:
            raise KeyError(f"users {sorted(unknown)} are not group members")
        if not subset:
            return 0.0
        if len(subset) == len(self.members):
            return 1.0
        return min(1.0, math.fsum(max(self.contributions[u], 0.0) for u in subset))

    def tail_values(self, ordered: Sequence[int]) -> np.ndarray:
        """C of every suffix of `ordered` (a permutation of the members): entry k is C(ordered[k:])."""
        positive = np.array([max(self.contributions[int(u)], 0.0) for u in ordered])
        tails = np.minimum(1.0, np.cumsum(positive[::-1])[::-1])
        tails[0] = 1.0
        return tails

    def restricted(self, members: Iterable[int]) -> "FuzzyCapacity":
        """Capacity of the sub-group `members`, with weights renormalised over it (memoised)."""
        key = frozenset(int(u) for u in members)
        if key == frozenset(self.members):
            return self
        cached = self._restricted.get(key)
        if cached is None:
            cached = FuzzyCapacity(sorted(key), self.global_weights, self.biases)
            self._restricted[key] = cached
        return cached


def capacity(subset: Iterable[int], g: GroupSpec, m: RatingMatrix) -> float:
    return FuzzyCapacity.from_training(g.members, m)(subset)


def _choquet_values(values: np.ndarray, members: Sequence[int], cap: FuzzyCapacity) -> Optional[float]:
    present = ~np.isnan(values)
    if not present.any():
        return None
    ids = np.asarray(members, dtype=np.int64)[present]
    ratings = values[present]
    order = np.lexsort((ids, ratings))
    ids, ratings = ids[order], ratings[order]
    if ids.size < len(members):
        cap = cap.restricted(ids.tolist())
    tails = cap.tail_values(ids.tolist())
    steps = np.diff(ratings) * tails[1:]
    return math.fsum([float(ratings[0]), *steps.tolist()])


def choquet(i: int, g: GroupSpec, pm: PredictionMatrix, cap: FuzzyCapacity) -> Optional[float]:
    """
    Choquet integral of the members' effective ratings of item i.

    Members without an effective rating are dropped and the capacity is
    re-evaluated on the remaining sub-group. Returns None when every member
    is missing.
    """
    values = pm.block(g.members, [i])[:, 0]
    return _choquet_values(values, g.members, cap)


def choquet_scores(
    items: Sequence[int],
    g: GroupSpec,
    pm: PredictionMatrix,
    cap: FuzzyCapacity,
) -> dict[int, float]:
    """Choquet score of every scorable item in `items`."""
    block = pm.block(g.members, items)
    scores = {}
    for col, i in enumerate(items):
        score = _choquet_values(block[:, col], g.members, cap)
        if score is not None:
            scores[int(i)] = score
    return scores


def recommend(
    g: GroupSpec,
    pm: PredictionMatrix,
    cfg: CandidateConfig,
    cap: Optional[FuzzyCapacity] = None,
    m: Optional[RatingMatrix] = None,
) -> GroupRecommendation:
    """
    Score the extended candidate set by Choquet integral and keep the top n_top.

    Either `cap` or the training matrix `m` (to build the capacity) must be given.
    """
    if cap is None:
        if m is None:
            raise ValueError("recommend needs a capacity or the training matrix")
        cap = FuzzyCapacity.from_training(g.members, m)

    candidates = extended_candidates(g, pm, cfg)
    scores = choquet_scores(candidates, g, pm, cap)
    unscored = len(candidates) - len(scores)
    if unscored:
        logger.debug(f"Group {g.id}: {unscored} candidates have no effective rating from any member")

    scored = np.array(sorted(scores), dtype=np.int64)
    keys = np.array([scores[int(i)] for i in scored])
    order = descending_order(keys, scored) if scored.size else np.empty(0, dtype=np.int64)
    items = [int(i) for i in scored[order[:cfg.n_top]]]

    flags = pm.provenance[np.ix_([pm.member_index(u) for u in g.members], pm.item_indices(items))]
    provenance = {
        item: tuple(int((flags[:, col] == p.value).sum()) for p in Provenance)
        for col, item in enumerate(items)
    }
    return GroupRecommendation(
        group_id=g.id,
        candidates=candidates,
        scores=scores,
        items=items,
        provenance=provenance,
    )
