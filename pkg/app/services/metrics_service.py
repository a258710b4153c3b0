"""Evaluation metrics: prediction accuracy, group satisfaction and fairness, novelty."""

import logging
import math
from typing import Optional, Sequence

import numpy as np

from app.core.exceptions import DatasetError
from app.core.utils import fsum_mean
from app.schemas.dataset import GroupSpec
from app.schemas.metrics import PredictionAccuracy
from app.services.dataset_service import RatingMatrix, Split, TrustGraph
from app.services.group_service import FuzzyCapacity, choquet_scores
from app.services.prediction_service import PredictionMatrix
from app.services.similarity_service import SimilarityTable

logger = logging.getLogger(__name__)


def mae_rmse(pm: PredictionMatrix, split: Split) -> PredictionAccuracy:
    """
    MAE and RMSE over the test cells of pm's users.

    Test cells without a prediction are skipped and counted.
    """
    test = split.test_frame
    test = test.loc[test["user"].isin(pm.members)]
    if test.empty:
        return PredictionAccuracy(evaluated=0, skipped=0)

    rows = np.array([pm.member_index(u) for u in test["user"]], dtype=np.int64)
    cols = pm.item_indices(test["item"])
    errors = pm.values[rows, cols] - test["rating"].to_numpy()
    errors = errors[~np.isnan(errors)]
    skipped = len(test) - errors.size
    if errors.size == 0:
        return PredictionAccuracy(evaluated=0, skipped=skipped)
    return PredictionAccuracy(
        mae=math.fsum(np.abs(errors).tolist()) / errors.size,
        rmse=math.sqrt(math.fsum((errors ** 2).tolist()) / errors.size),
        evaluated=int(errors.size),
        skipped=skipped,
    )


def _member_means(g: GroupSpec, items: Sequence[int], pm: PredictionMatrix) -> list[Optional[float]]:
    block = pm.block(g.members, items)
    return [fsum_mean(block[:, col].tolist()) for col in range(block.shape[1])]


def satisfactions(g: GroupSpec, items: Sequence[int], pm: PredictionMatrix) -> list[Optional[float]]:
    """s(u; I_r): each member's mean effective rating over the list (None if all missing)."""
    block = pm.block(g.members, items)
    return [fsum_mean(block[row].tolist()) for row in range(block.shape[0])]


def group_pref(g: GroupSpec, items: Sequence[int], pm: PredictionMatrix) -> Optional[float]:
    """Mean over items of the members' mean effective rating."""
    return fsum_mean(mean for mean in _member_means(g, items, pm) if mean is not None)


def _score_deviations(
    g: GroupSpec,
    items: Sequence[int],
    pm: PredictionMatrix,
    cap: FuzzyCapacity,
) -> list[float]:
    scores = choquet_scores(items, g, pm, cap)
    means = _member_means(g, items, pm)
    return [scores[int(i)] - mean for i, mean in zip(items, means) if mean is not None and int(i) in scores]


def mae_g(g: GroupSpec, items: Sequence[int], pm: PredictionMatrix, cap: FuzzyCapacity) -> Optional[float]:
    """Mean |Choquet score - member mean| over the list."""
    return fsum_mean(abs(d) for d in _score_deviations(g, items, pm, cap))


def rmse_g(g: GroupSpec, items: Sequence[int], pm: PredictionMatrix, cap: FuzzyCapacity) -> Optional[float]:
    mean_square = fsum_mean(d * d for d in _score_deviations(g, items, pm, cap))
    return None if mean_square is None else math.sqrt(mean_square)


def fairness_jain(g: GroupSpec, items: Sequence[int], pm: PredictionMatrix) -> Optional[float]:
    """Jain's index (sum s)^2 / (n * sum s^2) over members with a satisfaction."""
    s = [v for v in satisfactions(g, items, pm) if v is not None]
    if not s:
        return None
    squares = math.fsum(v * v for v in s)
    if squares == 0:
        return 1.0
    return min(1.0, math.fsum(s) ** 2 / (len(s) * squares))


def fairness_var(g: GroupSpec, items: Sequence[int], pm: PredictionMatrix) -> Optional[float]:
    """1 - population variance of member satisfactions."""
    s = [v for v in satisfactions(g, items, pm) if v is not None]
    if not s:
        return None
    mean = math.fsum(s) / len(s)
    return 1.0 - math.fsum((v - mean) ** 2 for v in s) / len(s)


def _log_rarity(counts: np.ndarray, n_users: int) -> np.ndarray:
    if n_users < 2:
        raise DatasetError(f"novelty needs at least two users, got {n_users}")
    counts = np.maximum(counts, 1)
    return -np.log2(counts / n_users) / math.log2(n_users)


def _rater_counts(items: Sequence[int], m: RatingMatrix) -> np.ndarray:
    return np.array([m.users_of(i).size for i in items], dtype=np.int64)


def novelty(items: Sequence[int], m: RatingMatrix) -> Optional[float]:
    """Mean of -log2(|U_i| / |U|) / log2(|U|); items nobody rated count as one rater."""
    if not items:
        return None
    return fsum_mean(_log_rarity(_rater_counts(items, m), m.n_users).tolist())


def ntc(items: Sequence[int], m: RatingMatrix, tg: TrustGraph) -> Optional[float]:
    """Novelty computed on the raters of each item that someone trusts (floored at one)."""
    if not items:
        return None
    trusted = np.array(sorted(tg.trusted_users), dtype=np.int64)
    counts = np.array([np.isin(m.users_of(i), trusted).sum() for i in items], dtype=np.int64)
    return fsum_mean(_log_rarity(counts, m.n_users).tolist())


def ntr(
    items: Sequence[int],
    m: RatingMatrix,
    tg: TrustGraph,
    t: SimilarityTable,
) -> Optional[float]:
    """
    1 - mean over items of the trust-weighted similarity mass between raters.

    For each item the mass sums t(u, v) * sim(u, v) over trust edges whose
    endpoints both rated it. The result is not clamped; items whose mass
    exceeds 1 or falls below 0 (signed similarities) are logged.
    """
    if not items:
        return None
    masses = []
    for i in items:
        raters = m.users_of(i)
        inside = np.isin(tg.sources, raters) & np.isin(tg.targets, raters)
        terms = [
            w * t.score(u, v)
            for u, v, w in zip(tg.sources[inside], tg.targets[inside], tg.weights[inside])
            if t.has_user(u) and t.has_user(v)
        ]
        masses.append(math.fsum(terms))
    heavy = sum(1 for mass in masses if mass > 1)
    if heavy:
        logger.warning(f"{heavy} of {len(items)} items carry trust-weighted similarity mass above 1 (negative novelty)")
    negative = sum(1 for mass in masses if mass < 0)
    if negative:
        logger.warning(f"{negative} of {len(items)} items carry negative trust-weighted similarity mass (novelty above 1)")
    return 1.0 - math.fsum(masses) / len(items)
