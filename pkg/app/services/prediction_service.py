"""Mean-centred neighbourhood prediction and the observed-else-predicted rating matrix."""

import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Optional, Sequence

import numpy as np

from app.core.text_utils import render_csv
from app.core.utils import clamp, descending_order
from app.schemas.dataset import GroupSpec
from app.schemas.enums import NeighborStrategy, Provenance
from app.schemas.neighbors import TopsisParams
from app.services.dataset_service import RatingMatrix
from app.services.neighbor_service import neighbor_keys
from app.services.similarity_service import SimilarityTable

logger = logging.getLogger(__name__)

EXPORT_HEADER = ("user", "item", "value", "provenance")


class PredictionMatrix:
    """
    Effective ratings of a set of users over every item.

    `values` holds the training rating where one exists, otherwise the
    prediction, otherwise NaN; `provenance` flags each cell with a
    Provenance code.
    """

    def __init__(
        self,
        members: Sequence[int],
        item_ids: np.ndarray,
        values: np.ndarray,
        provenance: np.ndarray,
    ) -> None:
        self.members = tuple(int(u) for u in members)
        self.item_ids = np.asarray(item_ids, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        self.provenance = np.asarray(provenance, dtype=np.int8)
        if self.values.shape != (len(self.members), len(self.item_ids)):
            raise ValueError("values must be members x items")
        self._member_pos = {u: k for k, u in enumerate(self.members)}
        self._item_pos = {int(i): k for k, i in enumerate(self.item_ids)}

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def member_index(self, u: int) -> int:
        return self._member_pos[int(u)]

    def item_index(self, i: int) -> int:
        return self._item_pos[int(i)]

    def item_indices(self, items: Iterable[int]) -> np.ndarray:
        return np.array([self._item_pos[int(i)] for i in items], dtype=np.int64)

    def row(self, u: int) -> np.ndarray:
        return self.values[self.member_index(u)]

    def effective_rating(self, u: int, i: int) -> Optional[float]:
        """Observed rating, else prediction, else None."""
        if int(i) not in self._item_pos:
            return None
        value = self.values[self.member_index(u), self._item_pos[int(i)]]
        return None if math.isnan(value) else float(value)

    def provenance_of(self, u: int, i: int) -> Provenance:
        return Provenance(int(self.provenance[self.member_index(u), self.item_index(i)]))

    def block(self, members: Sequence[int], items: Sequence[int]) -> np.ndarray:
        """Values for members x items (NaN where missing)."""
        rows = np.array([self.member_index(u) for u in members], dtype=np.int64)
        return self.values[np.ix_(rows, self.item_indices(items))]

    def provenance_counts(self, items: Optional[Sequence[int]] = None) -> dict[Provenance, int]:
        flags = self.provenance if items is None else self.provenance[:, self.item_indices(items)]
        return {p: int((flags == p.value).sum()) for p in Provenance}

    def missing_count(self, items: Optional[Sequence[int]] = None) -> int:
        return self.provenance_counts(items)[Provenance.MISSING]

    def export_rows(self) -> list[tuple]:
        rows = []
        for r, u in enumerate(self.members):
            for c, i in enumerate(self.item_ids.tolist()):
                rows.append((u, i, float(self.values[r, c]), Provenance(int(self.provenance[r, c])).label))
        return rows

    def to_csv(self) -> str:
        """`user,item,value,provenance`; missing cells have an empty value."""
        return render_csv(EXPORT_HEADER, self.export_rows())


def effective_rating(u: int, i: int, pm: PredictionMatrix) -> Optional[float]:
    return pm.effective_rating(u, i)


def predict_rating(
    u: int,
    i: int,
    nbrs: Sequence[int],
    t: SimilarityTable,
    m: RatingMatrix,
) -> Optional[float]:
    """
    r_bar_u + sum(sim * (r_vi - r_bar_v)) / sum(|sim|), clamped to [r_min, r_max].

    Returns None for an empty neighbourhood, an all-zero similarity mass or
    a user without training ratings.
    """
    if not nbrs or math.isnan(m.mean(u)):
        return None
    sims = [t.score(u, v) for v in nbrs]
    weight = math.fsum(abs(s) for s in sims)
    if weight == 0:
        return None
    deviation = math.fsum(s * (m.rating(v, i) - m.mean(v)) for s, v in zip(sims, nbrs))
    return clamp(m.mean(u) + deviation / weight, m.r_min, m.r_max)


class Predictor:
    """
    Fills effective-rating rows for one (table, strategy, k) configuration.

    A row covers every item at once: candidates are ordered once by the
    neighbour key, and for each item the first k raters in that order form
    the neighbourhood. Rows are memoised, so groups that share members
    reuse them.
    """

    def __init__(
        self,
        m: RatingMatrix,
        t: SimilarityTable,
        strategy: NeighborStrategy,
        k: int,
        topsis: Optional[TopsisParams] = None,
    ) -> None:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if not np.array_equal(t.user_ids, m.user_ids):
            raise ValueError("similarity table and rating matrix cover different users")
        self.m = m
        self.t = t
        self.strategy = NeighborStrategy(strategy)
        self.k = k
        self.topsis = topsis or TopsisParams()
        self._rows: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()

    def _compute_row(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        m, t = self.m, self.t
        row = m.user_index(u)
        observed = m.mask[row]
        values = np.where(observed, m.dense[row], np.nan)
        provenance = np.where(observed, Provenance.OBSERVED.value, Provenance.MISSING.value).astype(np.int8)

        mean_u = m.means[row]
        if math.isnan(mean_u):
            return values, provenance

        keys = neighbor_keys(u, self.strategy, t, self.topsis)
        others = np.flatnonzero(t.user_ids != int(u))
        order = others[descending_order(keys[others], t.user_ids[others])]
        rated = m.mask[order]
        selected = rated & (np.cumsum(rated, axis=0) <= self.k)
        sims = t.square_scores[t.user_index(u)][order][:, None]
        deviations = np.where(selected, m.dense[order] - m.means[order][:, None], 0.0)

        numerator = (np.where(selected, sims, 0.0) * deviations).sum(axis=0)
        weight = np.where(selected, np.abs(sims), 0.0).sum(axis=0)

        predictable = ~observed & (weight > 0)
        predicted = np.clip(mean_u + numerator[predictable] / weight[predictable], m.r_min, m.r_max)
        values[predictable] = predicted
        provenance[predictable] = Provenance.PREDICTED.value
        return values, provenance

    def row(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """(values, provenance) for user u over every item of the matrix."""
        u = int(u)
        cached = self._rows.get(u)
        if cached is not None:
            return cached
        computed = self._compute_row(u)
        with self._lock:
            return self._rows.setdefault(u, computed)

    def warm(self, users: Iterable[int], workers: int = 1) -> None:
        """Compute rows for `users` in parallel (each row is written once)."""
        pending = sorted({int(u) for u in users} - set(self._rows))
        if not pending:
            return
        # shared caches are materialised before threads touch them
        self.m.dense, self.m.mask, self.m.means, self.t.square_scores, self.t.square_co_counts
        started = time.perf_counter()
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            list(pool.map(self.row, pending))
        logger.info(
            f"Predicted {len(pending)} user rows ({self.t.measure}, {self.strategy.value}, k={self.k}) "
            f"in {time.perf_counter() - started:.1f}s"
        )

    def matrix(self, members: Sequence[int], workers: int = 1) -> PredictionMatrix:
        self.warm(members, workers)
        rows = [self.row(u) for u in members]
        values = np.vstack([r[0] for r in rows]) if rows else np.empty((0, self.m.n_items))
        provenance = np.vstack([r[1] for r in rows]) if rows else np.empty((0, self.m.n_items), dtype=np.int8)
        return PredictionMatrix(members, self.m.item_ids, values, provenance)


def predict_matrix(
    g: GroupSpec,
    k: int,
    strategy: NeighborStrategy,
    t: SimilarityTable,
    m: RatingMatrix,
    topsis: Optional[TopsisParams] = None,
    workers: int = 1,
) -> PredictionMatrix:
    """
    Effective ratings of every group member over every training item.

    `t` must be built on `m` (the training restriction of a split).
    """
    return Predictor(m, t, strategy, k, topsis).matrix(g.members, workers)
