"""Neighbourhood selection: raw-score KNN and TOPSIS closeness ranking."""

from typing import Optional

import numpy as np

from app.core.utils import descending_order
from app.schemas.enums import NeighborStrategy
from app.schemas.neighbors import TopsisParams
from app.services.dataset_service import RatingMatrix
from app.services.similarity_service import SimilarityTable


def criteria_closeness(scores: np.ndarray, uncertainty: np.ndarray, p: TopsisParams) -> np.ndarray:
    """
    TOPSIS closeness for arrays of (similarity, uncertainty) criteria.

    S is clamped to [0, 1] and S_bar = max(1 - S - U, 0). The ideal point
    is (1, 0, 0) and the anti-ideal (0, 1, 1); when both distances vanish
    the closeness is 0.5.
    """
    s = np.clip(np.asarray(scores, dtype=np.float64), 0.0, 1.0)
    u = np.asarray(uncertainty, dtype=np.float64)
    s_bar = np.maximum(1.0 - s - u, 0.0)

    d_plus = np.sqrt(p.w_s * (s - 1.0) ** 2 + p.w_u * u ** 2 + p.w_sbar * s_bar ** 2)
    d_minus = np.sqrt(p.w_s * s ** 2 + p.w_u * (u - 1.0) ** 2 + p.w_sbar * (s_bar - 1.0) ** 2)
    denom = d_plus + d_minus
    out = np.full(s.shape, 0.5)
    np.divide(d_minus, denom, out=out, where=denom > 0)
    return out


def closeness(scores: np.ndarray, co_counts: np.ndarray, p: TopsisParams) -> np.ndarray:
    """Closeness with uncertainty U = W / (W + co_count)."""
    u = p.W / (p.W + np.asarray(co_counts, dtype=np.float64))
    return criteria_closeness(scores, u, p)


def topsis_closeness(u: int, v: int, t: SimilarityTable, p: Optional[TopsisParams] = None) -> float:
    return float(closeness(np.array([t.score(u, v)]), np.array([t.co_count(u, v)]), p or TopsisParams())[0])


def neighbor_keys(
    u: int,
    strategy: NeighborStrategy,
    t: SimilarityTable,
    p: Optional[TopsisParams] = None,
) -> np.ndarray:
    """
    Ranking key of every table user as a neighbour of `u`, aligned with t.user_ids.

    KNN ranks by raw (signed) score, TOPSIS by closeness. The entry of `u`
    itself is meaningless and must be excluded by the caller.
    """
    row = t.user_index(u)
    scores = t.square_scores[row]
    if NeighborStrategy(strategy) == NeighborStrategy.KNN:
        return scores
    return closeness(scores, t.square_co_counts[row], p or TopsisParams())


def _select(u: int, i: int, k: int, keys: np.ndarray, t: SimilarityTable, m: RatingMatrix) -> list[int]:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    raters = m.users_of(i)
    raters = raters[(raters != u) & np.isin(raters, t.user_ids)]
    if raters.size == 0:
        return []
    positions = np.array([t.user_index(v) for v in raters], dtype=np.int64)
    order = descending_order(keys[positions], raters)
    return [int(v) for v in raters[order[:k]]]


def knn_neighbors(u: int, i: int, k: int, t: SimilarityTable, m: RatingMatrix) -> list[int]:
    """Up to k training raters of `i` (other than u), highest score first, ties by user-id."""
    return _select(u, i, k, neighbor_keys(u, NeighborStrategy.KNN, t), t, m)


def topsis_neighbors(
    u: int,
    i: int,
    k: int,
    t: SimilarityTable,
    m: RatingMatrix,
    p: Optional[TopsisParams] = None,
) -> list[int]:
    """Up to k training raters of `i` (other than u), highest closeness first, ties by user-id."""
    return _select(u, i, k, neighbor_keys(u, NeighborStrategy.TOPSIS, t, p), t, m)


def neighbors(
    u: int,
    i: int,
    k: int,
    strategy: NeighborStrategy,
    t: SimilarityTable,
    m: RatingMatrix,
    p: Optional[TopsisParams] = None,
) -> list[int]:
    if NeighborStrategy(strategy) == NeighborStrategy.KNN:
        return knn_neighbors(u, i, k, t, m)
    return topsis_neighbors(u, i, k, t, m, p)
