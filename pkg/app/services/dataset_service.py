"""Rating and trust loading, scale normalisation, per-user splitting and group sampling."""

import csv
import logging
import math
import re
from functools import cached_property
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import sparse

from app.core.exceptions import ConfigError, DatasetError, DatasetParseError, GroupError
from app.core.text_utils import format_float, render_csv
from app.schemas.dataset import GroupSpec, RatingRecord
from app.schemas.enums import DatasetFormat, SplitRole

logger = logging.getLogger(__name__)

# (separator, required fields, maximum fields) per rating format
_RATING_LAYOUT = {
    DatasetFormat.MOVIELENS_TAB: ("\t", 3, 4),  # user item rating [timestamp]
    DatasetFormat.FILMTRUST_SPACE: (r"\s+", 3, 3),  # user item rating
}
_TRUST_LAYOUT = (r"\s+", 3, 3)  # truster trustee weight

_LINE_IN_PARSER_ERROR = re.compile(r"line (\d+)")


def _read_triples(path: Path, sep: str, required: int, maximum: int) -> pd.DataFrame:
    """
    Read a headerless whitespace/tab file into (a, b, value) columns.

    Blank lines are ignored. Every other line must have `required` to
    `maximum` fields with integer ids and a finite numeric value; the first
    offending line raises DatasetParseError with its 1-based line number.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"file not found: {path}")

    try:
        raw = pd.read_csv(
            path,
            sep=sep,
            header=None,
            dtype=str,
            skip_blank_lines=False,
            quoting=csv.QUOTE_NONE,
            engine="python",
        )
    except pd.errors.EmptyDataError as e:
        raise DatasetError(f"{path}: empty file") from e
    except pd.errors.ParserError as e:
        match = _LINE_IN_PARSER_ERROR.search(str(e))
        line_number = int(match.group(1)) if match else 0
        raise DatasetParseError(str(path), line_number, f"wrong number of fields ({e})") from e

    raw = raw.dropna(how="all")
    if raw.empty:
        raise DatasetError(f"{path}: empty file")

    if raw.shape[1] > maximum:
        overflow = raw.iloc[:, maximum:].notna().any(axis=1)
        first = int(overflow.idxmax())
        raise DatasetParseError(str(path), first + 1, f"expected at most {maximum} fields")

    fields = raw.iloc[:, :required]
    if fields.shape[1] < required or fields.isna().to_numpy().any():
        short = fields.isna().any(axis=1) if fields.shape[1] == required else pd.Series(True, index=raw.index)
        first = int(short.idxmax())
        raise DatasetParseError(str(path), first + 1, f"expected at least {required} fields")

    a = pd.to_numeric(fields.iloc[:, 0], errors="coerce")
    b = pd.to_numeric(fields.iloc[:, 1], errors="coerce")
    value = pd.to_numeric(fields.iloc[:, 2], errors="coerce")
    bad = (
        a.isna() | b.isna() | value.isna()
        | (a % 1 != 0) | (b % 1 != 0)
        | ~np.isfinite(value.fillna(0.0))
    )
    if bad.any():
        first = int(bad.idxmax())
        raise DatasetParseError(
            str(path), first + 1, f"cannot parse '{' '.join(fields.loc[first].tolist())}'"
        )

    return pd.DataFrame(
        {"a": a.astype(np.int64), "b": b.astype(np.int64), "value": value.astype(np.float64)}
    )


class RatingMatrix:
    """
    Immutable sparse user x item rating store.

    Rows are users and columns items, both in ascending id order. The CSR
    layout gives I_u per user; its CSC copy is the item -> user inverted
    index. Per-user means and medians are computed once on first use; a
    matrix is never mutated, every transformation returns a new one.
    """

    def __init__(self, user_ids: np.ndarray, item_ids: np.ndarray, csr: sparse.csr_matrix) -> None:
        self.user_ids = np.asarray(user_ids, dtype=np.int64)
        self.item_ids = np.asarray(item_ids, dtype=np.int64)
        csr = sparse.csr_matrix(csr, dtype=np.float64)
        csr.sort_indices()
        self._csr = csr
        self._user_pos = {int(u): k for k, u in enumerate(self.user_ids)}
        self._item_pos = {int(i): k for k, i in enumerate(self.item_ids)}

    @classmethod
    def from_frame(
        cls,
        frame: pd.DataFrame,
        users: Optional[Sequence[int]] = None,
        items: Optional[Sequence[int]] = None,
    ) -> "RatingMatrix":
        """
        Build a matrix from a (user, item, rating) frame.

        Duplicate (user, item) rows keep the last occurrence. `users` and
        `items` widen the id universe (used to keep a training restriction
        aligned with its source matrix).
        """
        frame = frame.drop_duplicates(subset=["user", "item"], keep="last")
        user_ids = np.unique(np.concatenate([
            frame["user"].to_numpy(dtype=np.int64),
            np.asarray(users if users is not None else [], dtype=np.int64),
        ]))
        item_ids = np.unique(np.concatenate([
            frame["item"].to_numpy(dtype=np.int64),
            np.asarray(items if items is not None else [], dtype=np.int64),
        ]))
        rows = np.searchsorted(user_ids, frame["user"].to_numpy(dtype=np.int64))
        cols = np.searchsorted(item_ids, frame["item"].to_numpy(dtype=np.int64))
        csr = sparse.coo_matrix(
            (frame["rating"].to_numpy(dtype=np.float64), (rows, cols)),
            shape=(len(user_ids), len(item_ids)),
        ).tocsr()
        return cls(user_ids, item_ids, csr)

    # ---------- shape and scale -------------------------------------------
    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_ratings(self) -> int:
        return int(self._csr.nnz)

    @property
    def r_min(self) -> float:
        return float(self._csr.data.min()) if self.n_ratings else math.nan

    @property
    def r_max(self) -> float:
        return float(self._csr.data.max()) if self.n_ratings else math.nan

    @property
    def sparsity(self) -> float:
        cells = self.n_users * self.n_items
        return 1.0 - self.n_ratings / cells if cells else 1.0

    @property
    def csr(self) -> sparse.csr_matrix:
        return self._csr

    @cached_property
    def csc(self) -> sparse.csc_matrix:
        return self._csr.tocsc()

    # ---------- id lookup --------------------------------------------------
    def has_user(self, user: int) -> bool:
        return int(user) in self._user_pos

    def user_index(self, user: int) -> int:
        return self._user_pos[int(user)]

    def item_index(self, item: int) -> int:
        return self._item_pos[int(item)]

    # ---------- I_u, U_i and ratings --------------------------------------
    def _row_slice(self, row: int) -> slice:
        return slice(self._csr.indptr[row], self._csr.indptr[row + 1])

    def item_columns(self, user: int) -> np.ndarray:
        """Column indices of I_u (ascending)."""
        return self._csr.indices[self._row_slice(self.user_index(user))]

    def items_of(self, user: int) -> np.ndarray:
        return self.item_ids[self.item_columns(user)]

    def ratings_of(self, user: int) -> np.ndarray:
        return self._csr.data[self._row_slice(self.user_index(user))]

    def users_of(self, item: int) -> np.ndarray:
        if int(item) not in self._item_pos:
            return np.empty(0, dtype=np.int64)
        col = self._item_pos[int(item)]
        rows = self.csc.indices[self.csc.indptr[col]:self.csc.indptr[col + 1]]
        return np.sort(self.user_ids[rows])

    def rating(self, user: int, item: int) -> Optional[float]:
        if int(user) not in self._user_pos or int(item) not in self._item_pos:
            return None
        row = self.user_index(user)
        cols = self._csr.indices[self._row_slice(row)]
        pos = np.searchsorted(cols, self.item_index(item))
        if pos < len(cols) and cols[pos] == self.item_index(item):
            return float(self._csr.data[self._csr.indptr[row] + pos])
        return None

    @cached_property
    def user_counts(self) -> np.ndarray:
        """|I_u| per user row."""
        return np.diff(self._csr.indptr)

    @cached_property
    def item_counts(self) -> np.ndarray:
        """|U_i| per item column."""
        return np.diff(self.csc.indptr)

    @cached_property
    def means(self) -> np.ndarray:
        """Per-user mean rating (NaN for users with no ratings)."""
        sums = np.asarray(self._csr.sum(axis=1)).ravel()
        counts = self.user_counts
        out = np.full(self.n_users, np.nan)
        rated = counts > 0
        out[rated] = sums[rated] / counts[rated]
        return out

    @cached_property
    def medians(self) -> np.ndarray:
        """Per-user median rating (NaN for users with no ratings)."""
        out = np.full(self.n_users, np.nan)
        for row in range(self.n_users):
            data = self._csr.data[self._row_slice(row)]
            if data.size:
                out[row] = float(np.median(data))
        return out

    def mean(self, user: int) -> float:
        return float(self.means[self.user_index(user)])

    def median(self, user: int) -> float:
        return float(self.medians[self.user_index(user)])

    # ---------- dense views for vectorised kernels ------------------------
    @cached_property
    def dense(self) -> np.ndarray:
        """Ratings as a dense array, 0 where unrated (use `mask` for presence)."""
        return self._csr.toarray()

    @cached_property
    def mask(self) -> np.ndarray:
        structure = sparse.csr_matrix(
            (np.ones(self.n_ratings, dtype=bool), self._csr.indices, self._csr.indptr),
            shape=self._csr.shape,
        )
        return structure.toarray()

    # ---------- export ----------------------------------------------------
    def to_frame(self) -> pd.DataFrame:
        coo = self._csr.tocoo()
        frame = pd.DataFrame({
            "user": self.user_ids[coo.row],
            "item": self.item_ids[coo.col],
            "rating": coo.data,
        })
        return frame.sort_values(["user", "item"], kind="mergesort").reset_index(drop=True)

    def records(self) -> Iterator[RatingRecord]:
        """Every rating as a RatingRecord, ordered by user then item."""
        for row in self.to_frame().itertuples(index=False):
            yield RatingRecord(user=int(row.user), item=int(row.item), rating=float(row.rating))

    def save(self, path: str | Path, fmt: DatasetFormat) -> None:
        """Write the matrix in one of the supported formats (round-trips through load_ratings)."""
        sep = "\t" if fmt == DatasetFormat.MOVIELENS_TAB else " "
        lines = []
        for record in self.records():
            fields = [str(record.user), str(record.item), format_float(record.rating)]
            if fmt == DatasetFormat.MOVIELENS_TAB:
                fields.append("0")
            lines.append(sep.join(fields))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def __repr__(self) -> str:
        return f"RatingMatrix(users={self.n_users}, items={self.n_items}, ratings={self.n_ratings})"


class TrustGraph:
    """Directed weighted trust edges (truster -> trustee, weight in [0, 1])."""

    def __init__(
        self,
        sources: np.ndarray,
        targets: np.ndarray,
        weights: np.ndarray,
        dropped_self_loops: int = 0,
        clamped_weights: int = 0,
    ) -> None:
        self.sources = np.asarray(sources, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.dropped_self_loops = dropped_self_loops
        self.clamped_weights = clamped_weights

    @property
    def warning_count(self) -> int:
        return self.dropped_self_loops + self.clamped_weights

    def __len__(self) -> int:
        return len(self.sources)

    def edges(self) -> Iterator[tuple[int, int, float]]:
        for u, v, t in zip(self.sources, self.targets, self.weights):
            yield int(u), int(v), float(t)

    @cached_property
    def trusted_users(self) -> frozenset[int]:
        """Users trusted by at least one other user."""
        return frozenset(int(v) for v in np.unique(self.targets))


class Split:
    """
    Per-user train/test partition of a rating matrix.

    `frame` holds every source rating with an `is_test` flag. The training
    restriction keeps the source user and item universes so indices line up
    with the full matrix.
    """

    def __init__(
        self,
        source: RatingMatrix,
        frame: pd.DataFrame,
        seed: int,
        test_ratio: float,
        repaired: int = 0,
    ) -> None:
        self.source = source
        self.frame = frame
        self.seed = seed
        self.test_ratio = test_ratio
        self.repaired = repaired

    @cached_property
    def train(self) -> RatingMatrix:
        rows = self.frame.loc[~self.frame["is_test"], ["user", "item", "rating"]]
        return RatingMatrix.from_frame(rows, users=self.source.user_ids, items=self.source.item_ids)

    @cached_property
    def test_frame(self) -> pd.DataFrame:
        return self.frame.loc[self.frame["is_test"], ["user", "item", "rating"]].reset_index(drop=True)

    def train_items(self, user: int) -> np.ndarray:
        return self.train.items_of(user)

    def test_items(self, user: int) -> np.ndarray:
        rows = self.test_frame
        return rows.loc[rows["user"] == user, "item"].to_numpy()

    @property
    def train_item_ids(self) -> np.ndarray:
        """I_train: union of every user's training items."""
        return np.unique(self.frame.loc[~self.frame["is_test"], "item"].to_numpy())

    @property
    def test_item_ids(self) -> np.ndarray:
        return np.unique(self.test_frame["item"].to_numpy())

    @property
    def n_test(self) -> int:
        return int(self.frame["is_test"].sum())

    def to_manifest(self) -> str:
        """`user,item,role` audit manifest, ordered by user then item."""
        roles = np.where(self.frame["is_test"], SplitRole.TEST.value, SplitRole.TRAIN.value)
        return render_csv(
            ("user", "item", "role"),
            zip(self.frame["user"].tolist(), self.frame["item"].tolist(), roles.tolist()),
        )


def load_ratings(path: str | Path, fmt: DatasetFormat) -> RatingMatrix:
    """
    Load a MovieLens (tab) or FilmTrust (whitespace) rating file.

    Duplicate (user, item) lines keep the last rating; timestamps are ignored.

    Raises:
        DatasetError: missing or empty file
        DatasetParseError: malformed line (carries the line number)
    """
    fmt = DatasetFormat(fmt)
    sep, required, maximum = _RATING_LAYOUT[fmt]
    table = _read_triples(Path(path), sep, required, maximum)
    frame = table.rename(columns={"a": "user", "b": "item", "value": "rating"})
    matrix = RatingMatrix.from_frame(frame)
    duplicates = len(frame) - matrix.n_ratings
    logger.info(
        f"Loaded {path}: {matrix.n_users} users, {matrix.n_items} items, {matrix.n_ratings} ratings "
        f"on [{matrix.r_min}, {matrix.r_max}], sparsity {matrix.sparsity:.3%}"
    )
    if duplicates:
        logger.warning(f"{path}: {duplicates} duplicate (user, item) lines resolved last-write-wins")
    return matrix


def load_trust(path: str | Path) -> TrustGraph:
    """
    Load `truster trustee weight` triples.

    Self-loops are dropped and weights outside [0, 1] are clamped; both are
    counted in `warning_count`. Duplicate directed edges keep the last weight.
    """
    table = _read_triples(Path(path), *_TRUST_LAYOUT)
    table = table.drop_duplicates(subset=["a", "b"], keep="last")

    loops = table["a"] == table["b"]
    dropped = int(loops.sum())
    table = table.loc[~loops]

    weights = table["value"].to_numpy()
    clamped = int(((weights < 0) | (weights > 1)).sum())
    weights = np.clip(weights, 0.0, 1.0)

    if dropped or clamped:
        logger.warning(f"{path}: dropped {dropped} self-loops, clamped {clamped} weights into [0, 1]")
    logger.info(f"Loaded {path}: {len(table)} trust edges")
    return TrustGraph(
        table["a"].to_numpy(),
        table["b"].to_numpy(),
        weights,
        dropped_self_loops=dropped,
        clamped_weights=clamped,
    )


def normalize_scale(m: RatingMatrix, lo: float, hi: float) -> RatingMatrix:
    """
    Affine map of every rating from [r_min, r_max] onto [lo, hi].

    Raises:
        DatasetError: degenerate source scale or hi <= lo
    """
    if not hi > lo:
        raise DatasetError(f"target scale [{lo}, {hi}] is empty")
    r_min, r_max = m.r_min, m.r_max
    if not r_max > r_min:
        raise DatasetError(f"cannot normalize a degenerate scale (r_min = r_max = {r_min})")

    data = m.csr.data
    mapped = lo + (data - r_min) * (hi - lo) / (r_max - r_min)
    # endpoints exact
    mapped[data == r_min] = lo
    mapped[data == r_max] = hi
    mapped = np.clip(mapped, lo, hi)

    csr = sparse.csr_matrix((mapped, m.csr.indices.copy(), m.csr.indptr.copy()), shape=m.csr.shape)
    return RatingMatrix(m.user_ids, m.item_ids, csr)


def split_per_user(
    m: RatingMatrix,
    test_ratio: float,
    seed: int,
    min_train: int = 5,
) -> Split:
    """
    Randomly move floor(test_ratio * |I_u|) of each user's items to test.

    Users with at most `min_train` ratings keep everything in train and no
    user drops below `min_train` training ratings. Afterwards any test pair
    whose item has no training occurrence is moved back to train, in
    (user, item) order, so every test item is predictable.
    """
    if not 0 < test_ratio < 1:
        raise DatasetError(f"test_ratio must lie in (0, 1), got {test_ratio}")
    if seed < 0:
        raise ConfigError(f"split seed must be a non-negative integer, got {seed}")

    rng = np.random.default_rng(seed)
    frame = m.to_frame()
    is_test = np.zeros(len(frame), dtype=bool)

    # to_frame is sorted by user then item, matching CSR row order
    offsets = np.concatenate([[0], np.cumsum(m.user_counts)])
    for row in range(m.n_users):
        n = int(m.user_counts[row])
        if n <= min_train:
            continue
        n_test = min(math.floor(test_ratio * n + 1e-9), n - min_train)
        if n_test <= 0:
            continue
        chosen = rng.choice(n, size=n_test, replace=False)
        is_test[offsets[row] + chosen] = True

    item_cols = np.searchsorted(m.item_ids, frame["item"].to_numpy())
    train_count = np.bincount(item_cols[~is_test], minlength=m.n_items)
    repaired = 0
    for pos in np.flatnonzero(is_test):
        col = item_cols[pos]
        if train_count[col] == 0:
            is_test[pos] = False
            train_count[col] += 1
            repaired += 1

    frame["is_test"] = is_test
    logger.info(
        f"Split seed={seed} ratio={test_ratio}: {int(is_test.sum())} test / {int((~is_test).sum())} train "
        f"ratings, {repaired} test pairs moved back to train"
    )
    return Split(m, frame, seed=seed, test_ratio=test_ratio, repaired=repaired)


def generate_groups(
    m: RatingMatrix,
    n_groups: int,
    min_size: int,
    max_size: int,
    seed: int,
) -> list[GroupSpec]:
    """
    Sample groups: size uniform on [min_size, max_size], members uniform without replacement.

    Raises:
        GroupError: sizes out of range for this matrix
        ConfigError: negative seed
    """
    if min_size < 1:
        raise GroupError(f"min_size must be >= 1, got {min_size}")
    if min_size > max_size:
        raise GroupError(f"min_size ({min_size}) exceeds max_size ({max_size})")
    if max_size > m.n_users:
        raise GroupError(f"max_size ({max_size}) exceeds the number of users ({m.n_users})")
    if seed < 0:
        raise ConfigError(f"group seed must be a non-negative integer, got {seed}")

    rng = np.random.default_rng(seed)
    groups = []
    for group_id in range(n_groups):
        size = int(rng.integers(min_size, max_size + 1))
        members = rng.choice(m.user_ids, size=size, replace=False)
        groups.append(GroupSpec(id=group_id, members=tuple(int(u) for u in members)))
    return groups
