"""User-user similarity measures and the pairwise similarity table.

Every measure is evaluated by one vectorised kernel over the co-rated
evidence between a user and a block of other users. The per-pair functions
and the table build share those kernels, so a table entry and the
corresponding per-pair call agree to floating-point rounding.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd

from app.core.exceptions import DatasetError, SimilarityError
from app.core.text_utils import render_csv
from app.schemas.enums import DominantMeasure, SimilarityMeasure
from app.schemas.similarity import CbsParams, SimilarityConfig, UASimParams
from app.services.dataset_service import RatingMatrix

logger = logging.getLogger(__name__)

TABLE_HEADER = ("u", "v", "score", "co_count", "union_count")


class _PairEvidence:
    """Co-rated evidence between user row `row` and the user rows `others`.

    Arrays are restricted to the columns of I_u, so every reduction runs
    over u's items only; cells the other user did not rate are zero and
    masked out.
    """

    def __init__(self, m: RatingMatrix, row: int, others: np.ndarray) -> None:
        start, stop = m.csr.indptr[row], m.csr.indptr[row + 1]
        cols = m.csr.indices[start:stop]
        self.user = int(m.user_ids[row])
        self.other_users = m.user_ids[others]
        self.ra = m.csr.data[start:stop]
        self.mean_a = m.means[row]
        self.rv = m.dense[np.ix_(others, cols)]
        self.mv = m.mask[np.ix_(others, cols)]
        self.means_v = m.means[others]
        self.co = self.mv.sum(axis=1).astype(np.int64)
        self.union = (m.user_counts[row] + m.user_counts[others] - self.co).astype(np.int64)

    def pair(self, k: int) -> tuple[int, int]:
        return self.user, int(self.other_users[k])


def _cosine(ev: _PairEvidence) -> np.ndarray:
    dot = (ev.rv * ev.ra).sum(axis=1)
    norm_a = (ev.mv * ev.ra ** 2).sum(axis=1)
    norm_v = (ev.rv ** 2).sum(axis=1)
    denom = np.sqrt(norm_a * norm_v)
    out = np.zeros_like(dot)
    np.divide(dot, denom, out=out, where=(ev.co > 0) & (denom > 0))
    return out


def _jaccard(ev: _PairEvidence) -> np.ndarray:
    out = np.zeros(len(ev.co))
    np.divide(ev.co, ev.union, out=out, where=ev.union > 0)
    return out


def _taj(ev: _PairEvidence) -> np.ndarray:
    """Four-case triangle-area similarity on mean-centred co-rated vectors."""
    ca = ev.ra - ev.mean_a
    cv = (ev.rv - ev.means_v[:, None]) * ev.mv
    dot = (cv * ca).sum(axis=1)
    na = np.sqrt((ev.mv * ca ** 2).sum(axis=1))
    nv = np.sqrt((cv ** 2).sum(axis=1))
    co = ev.co.astype(np.float64)
    union = ev.union.astype(np.float64)

    valid = (ev.co > 0) & (na > 0) & (nv > 0)
    safe_na = np.where(valid, na, 1.0)
    safe_nv = np.where(valid, nv, 1.0)
    safe_union = np.where(valid, union, 1.0)

    positive = dot >= 0
    a_shorter = na <= nv
    out = np.select(
        [positive & a_shorter, positive & ~a_shorter, ~positive & a_shorter],
        [
            dot ** 2 * co / (safe_na * safe_nv ** 3 * safe_union),
            dot ** 2 * co / (safe_na ** 3 * safe_nv * safe_union),
            dot * co / (safe_nv ** 2 * safe_union),
        ],
        default=dot * co / (safe_na ** 2 * safe_union),
    )
    return np.where(valid, out, 0.0)


def _uasim(ev: _PairEvidence, p: UASimParams) -> np.ndarray:
    """Belief (summed min/max rating ratios) plus beta times uncertainty."""
    zero = ev.mv & ((ev.rv == 0) | (ev.ra == 0))
    if zero.any():
        k = int(np.flatnonzero(zero.any(axis=1))[0])
        raise SimilarityError("zero rating in the co-rated set; normalize ratings first", pair=ev.pair(k))

    hi = np.maximum(ev.rv, ev.ra)
    lo = np.minimum(ev.rv, ev.ra)
    ratio = np.zeros_like(hi)
    np.divide(lo, hi, out=ratio, where=ev.mv)
    r_x = ratio.sum(axis=1)
    evidence = ev.co + p.w
    belief = r_x / evidence
    uncertainty = p.w / evidence
    return belief + p.beta * uncertainty


def _uasimj(ev: _PairEvidence, p: UASimParams) -> np.ndarray:
    return _uasim(ev, p) * _jaccard(ev)


def _cbs(ev: _PairEvidence, up: UASimParams, cp: CbsParams) -> np.ndarray:
    """Blend dominant and secondary below the threshold; dominant at or above it."""
    if cp.dominant == DominantMeasure.UASIMJ:
        dominant, secondary = _uasimj(ev, up), _taj(ev)
    else:
        dominant, secondary = _taj(ev), _uasim(ev, up)
    blended = cp.a * dominant + (1 - cp.a) * secondary
    return np.where(dominant < cp.th, blended, dominant)


def _kernel(config: SimilarityConfig) -> Callable[[_PairEvidence], np.ndarray]:
    measure = config.measure
    if measure == SimilarityMeasure.COSINE:
        return _cosine
    if measure == SimilarityMeasure.JACCARD:
        return _jaccard
    if measure == SimilarityMeasure.TAJ:
        return _taj
    if measure == SimilarityMeasure.UASIM:
        return lambda ev: _uasim(ev, config.uasim)
    if measure == SimilarityMeasure.UASIMJ:
        return lambda ev: _uasimj(ev, config.uasim)
    return lambda ev: _cbs(ev, config.uasim, config.cbs)


def _pair_evidence(u: int, v: int, m: RatingMatrix) -> _PairEvidence:
    return _PairEvidence(m, m.user_index(u), np.array([m.user_index(v)], dtype=np.int64))


def cosine(u: int, v: int, m: RatingMatrix) -> float:
    """Cosine over co-rated training items; 0 without overlap or with a zero-norm vector."""
    return float(_cosine(_pair_evidence(u, v, m))[0])


def jaccard(u: int, v: int, m: RatingMatrix) -> float:
    return float(_jaccard(_pair_evidence(u, v, m))[0])


def taj(u: int, v: int, m: RatingMatrix) -> float:
    """Triangle-area/Jaccard similarity; user means are over all their training items."""
    return float(_taj(_pair_evidence(u, v, m))[0])


def uasim(u: int, v: int, m: RatingMatrix, p: Optional[UASimParams] = None) -> float:
    """
    Uncertainty-aware similarity.

    Raises:
        SimilarityError: a co-rated rating is zero
    """
    return float(_uasim(_pair_evidence(u, v, m), p or UASimParams())[0])


def uasimj(u: int, v: int, m: RatingMatrix, p: Optional[UASimParams] = None) -> float:
    return float(_uasimj(_pair_evidence(u, v, m), p or UASimParams())[0])


def cbs(
    u: int,
    v: int,
    m: RatingMatrix,
    up: Optional[UASimParams] = None,
    cp: Optional[CbsParams] = None,
) -> float:
    return float(_cbs(_pair_evidence(u, v, m), up or UASimParams(), cp or CbsParams())[0])


def pair_score(u: int, v: int, m: RatingMatrix, config: SimilarityConfig) -> float:
    return float(_kernel(config)(_pair_evidence(u, v, m))[0])


class SimilarityTable:
    """
    Symmetric user-pair table stored upper-triangular (condensed, row-major).

    Each unordered pair {u, v} holds its score, |I_u ∩ I_v| and |I_u ∪ I_v|.
    The diagonal is absent.
    """

    def __init__(
        self,
        user_ids: np.ndarray,
        scores: np.ndarray,
        co_counts: np.ndarray,
        union_counts: np.ndarray,
        measure: str = "",
    ) -> None:
        n = len(user_ids)
        expected = n * (n - 1) // 2
        if not len(scores) == len(co_counts) == len(union_counts) == expected:
            raise ValueError(f"condensed arrays must have length {expected} for {n} users")
        self.user_ids = np.asarray(user_ids, dtype=np.int64)
        self.scores = np.asarray(scores, dtype=np.float64)
        self.co_counts = np.asarray(co_counts, dtype=np.int64)
        self.union_counts = np.asarray(union_counts, dtype=np.int64)
        self.measure = measure
        self._pos = {int(u): k for k, u in enumerate(self.user_ids)}

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    def __len__(self) -> int:
        return len(self.scores)

    def _index(self, u: int, v: int) -> int:
        a, b = self._pos[int(u)], self._pos[int(v)]
        if a == b:
            raise KeyError(f"no diagonal entry for user {u}")
        if a > b:
            a, b = b, a
        n = self.n_users
        return a * n - a * (a + 1) // 2 + (b - a - 1)

    def score(self, u: int, v: int) -> float:
        return float(self.scores[self._index(u, v)])

    def co_count(self, u: int, v: int) -> int:
        return int(self.co_counts[self._index(u, v)])

    def union_count(self, u: int, v: int) -> int:
        return int(self.union_counts[self._index(u, v)])

    def user_index(self, u: int) -> int:
        return self._pos[int(u)]

    def has_user(self, u: int) -> bool:
        return int(u) in self._pos

    def _square(self, condensed: np.ndarray) -> np.ndarray:
        n = self.n_users
        square = np.zeros((n, n), dtype=condensed.dtype)
        upper = np.triu_indices(n, k=1)
        square[upper] = condensed
        square.T[upper] = condensed
        return square

    @cached_property
    def square_scores(self) -> np.ndarray:
        """Dense symmetric score matrix (diagonal 0) for row-wise neighbour queries."""
        return self._square(self.scores)

    @cached_property
    def square_co_counts(self) -> np.ndarray:
        return self._square(self.co_counts)

    def pairs(self):
        upper = np.triu_indices(self.n_users, k=1)
        return zip(self.user_ids[upper[0]], self.user_ids[upper[1]])

    def dump(self, path: str | Path) -> None:
        """Write `u,v,score,co_count,union_count`, one line per unordered pair."""
        upper = np.triu_indices(self.n_users, k=1)
        rows = zip(
            self.user_ids[upper[0]].tolist(),
            self.user_ids[upper[1]].tolist(),
            self.scores.tolist(),
            self.co_counts.tolist(),
            self.union_counts.tolist(),
        )
        Path(path).write_text(render_csv(TABLE_HEADER, rows), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, measure: str = "") -> "SimilarityTable":
        frame = pd.read_csv(path, dtype={"u": np.int64, "v": np.int64, "co_count": np.int64, "union_count": np.int64})
        if list(frame.columns) != list(TABLE_HEADER):
            raise DatasetError(f"{path}: expected header {','.join(TABLE_HEADER)}")
        user_ids = np.unique(np.concatenate([frame["u"].to_numpy(), frame["v"].to_numpy()]))
        n = len(user_ids)
        if len(frame) != n * (n - 1) // 2:
            raise DatasetError(f"{path}: {len(frame)} rows do not cover all pairs of {n} users")
        a = np.searchsorted(user_ids, np.minimum(frame["u"], frame["v"]))
        b = np.searchsorted(user_ids, np.maximum(frame["u"], frame["v"]))
        index = a * n - a * (a + 1) // 2 + (b - a - 1)
        scores = np.empty(len(frame))
        co = np.empty(len(frame), dtype=np.int64)
        union = np.empty(len(frame), dtype=np.int64)
        scores[index] = frame["score"].to_numpy()
        co[index] = frame["co_count"].to_numpy()
        union[index] = frame["union_count"].to_numpy()
        return cls(user_ids, scores, co, union, measure=measure)


def build_similarity_table(
    m: RatingMatrix,
    config: SimilarityConfig,
    workers: int = 1,
) -> SimilarityTable:
    """
    Score every unordered user pair of the (training) matrix.

    Rows are partitioned across threads; each row writes only its own slice
    of the condensed arrays, so the table is identical for any worker count.

    Raises:
        SimilarityError: a pair cannot be scored (carries the pair)
    """
    n = m.n_users
    n_pairs = n * (n - 1) // 2
    scores = np.zeros(n_pairs)
    co_counts = np.zeros(n_pairs, dtype=np.int64)
    union_counts = np.zeros(n_pairs, dtype=np.int64)
    kernel = _kernel(config)

    def fill(row: int) -> None:
        others = np.arange(row + 1, n, dtype=np.int64)
        if others.size == 0:
            return
        ev = _PairEvidence(m, row, others)
        start = row * n - row * (row + 1) // 2
        stop = start + others.size
        scores[start:stop] = kernel(ev)
        co_counts[start:stop] = ev.co
        union_counts[start:stop] = ev.union

    # materialise shared caches before threads read them
    m.dense, m.mask, m.means, m.user_counts

    started = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        list(pool.map(fill, range(n)))
    elapsed = time.perf_counter() - started
    logger.info(f"Built {config.label} table: {n_pairs} pairs over {n} users in {elapsed:.1f}s ({workers} workers)")
    return SimilarityTable(m.user_ids, scores, co_counts, union_counts, measure=config.label)
