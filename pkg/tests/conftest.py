"""
Pytest configuration and shared fixtures for the group recommender tests.

Datasets are small text files written to tmp_path in the real MovieLens and
FilmTrust layouts, so every test goes through the same loaders as the CLI.
"""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from sqlmodel import Session, SQLModel, create_engine

from app.core.config import get_settings
from app.db.database import get_engine
from app.schemas.enums import DatasetFormat, Provenance
from app.services.dataset_service import RatingMatrix, load_ratings
from app.services.prediction_service import PredictionMatrix

# user, item, rating (hand-checkable similarity values)
TOY_RATINGS = [
    (1, 10, 5), (1, 11, 3), (1, 12, 4), (1, 13, 1),
    (2, 10, 4), (2, 11, 3), (2, 12, 5), (2, 14, 2),
    (3, 10, 1), (3, 11, 5), (3, 13, 4), (3, 15, 3),
    (4, 11, 2), (4, 12, 4), (4, 14, 5), (4, 15, 1),
]


def write_movielens(path: Path, rows) -> Path:
    lines = [f"{u}\t{i}\t{r}\t88125{k:04d}" for k, (u, i, r) in enumerate(rows)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_filmtrust(path: Path, rows) -> Path:
    path.write_text("\n".join(f"{u} {i} {r}" for u, i, r in rows) + "\n", encoding="utf-8")
    return path


def random_ratings(n_users: int, n_items: int, density: float, seed: int, scale=(1, 5)) -> list[tuple]:
    """Random integer ratings; every user rates at least eight items and every item is rated."""
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(1, n_users + 1):
        n = max(8, int(rng.binomial(n_items, density)))
        items = rng.choice(np.arange(1, n_items + 1), size=min(n, n_items), replace=False)
        for i in sorted(items.tolist()):
            rows.append((u, int(i), int(rng.integers(scale[0], scale[1] + 1))))
    rated = {i for _, i, _ in rows}
    for i in range(1, n_items + 1):
        if i not in rated:
            rows.append((1 + i % n_users, i, int(rng.integers(scale[0], scale[1] + 1))))
    return rows


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Point data_dir and the run ledger at tmp_path for every test."""
    monkeypatch.setenv("DATA_DIR", str(tmp_path))
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "outputs"))
    monkeypatch.setenv("RUN_AUDIT_DATABASE_URL", f"sqlite:///{tmp_path / 'runs.db'}")
    monkeypatch.setenv("WORKERS", "1")
    get_settings.cache_clear()
    get_engine.cache_clear()
    yield get_settings()
    get_engine.cache_clear()
    get_settings.cache_clear()


@pytest.fixture
def toy_ratings_file(tmp_path) -> Path:
    return write_movielens(tmp_path / "toy.data", TOY_RATINGS)


@pytest.fixture
def toy_matrix(toy_ratings_file) -> RatingMatrix:
    return load_ratings(toy_ratings_file, DatasetFormat.MOVIELENS_TAB)


def matrix_from_rows(rows) -> RatingMatrix:
    frame = pd.DataFrame(rows, columns=["user", "item", "rating"])
    return RatingMatrix.from_frame(frame)


def pm_from(members, items, values) -> PredictionMatrix:
    """Prediction matrix with every present cell flagged predicted."""
    values = np.asarray(values, dtype=np.float64)
    flags = np.where(np.isnan(values), Provenance.MISSING.value, Provenance.PREDICTED.value)
    return PredictionMatrix(members, np.asarray(items), values, flags)


@pytest.fixture
def random_rows() -> list[tuple]:
    return random_ratings(n_users=40, n_items=60, density=0.3, seed=3)


@pytest.fixture
def random_matrix(random_rows) -> RatingMatrix:
    return matrix_from_rows(random_rows)


@pytest.fixture
def experiment_files(tmp_path, random_rows) -> dict[str, Path]:
    """A MovieLens-style ratings file plus a FilmTrust-style copy with trust edges."""
    write_movielens(tmp_path / "ratings.data", random_rows)
    # FilmTrust scale 0.5..4.0
    ft_rows = [(u, i, r * 0.5 + 1.5) for u, i, r in random_rows]
    ft_rows[-1] = (ft_rows[-1][0], ft_rows[-1][1], 0.5)
    write_filmtrust(tmp_path / "ft_ratings.txt", ft_rows)
    rng = np.random.default_rng(11)
    edges = set()
    while len(edges) < 80:
        u, v = (int(x) for x in rng.integers(1, 41, size=2))
        if u != v:
            edges.add((u, v))
    (tmp_path / "ft_trust.txt").write_text(
        "\n".join(f"{u} {v} 1" for u, v in sorted(edges)) + "\n", encoding="utf-8"
    )
    return {
        "ratings": tmp_path / "ratings.data",
        "ft_ratings": tmp_path / "ft_ratings.txt",
        "ft_trust": tmp_path / "ft_trust.txt",
    }


SMALL_CONFIG = """
[dataset]
name = "{name}"
ratings_path = "{ratings}"
format = "{fmt}"
{extra}

[split]
test_ratio = 0.2
seed = 5
min_train = 5

[similarity]
measure = "cbs"

[similarity.cbs]
dominant = "{dominant}"
a = {a}
th = {th}

[neighbors]
strategy = "{strategy}"
k = 10

[candidates]
n_filter = 5
n_borda = 6
n_top = 8

[groups]
n_groups = 6
min_size = 2
max_size = 5
seed = 13

[evaluation]
n_top_sweep = [2, 4, 8]
measures = ["cosine", "cbs"]
strategies = ["knn", "topsis"]
"""


@pytest.fixture
def movielens_config_file(tmp_path, experiment_files) -> Path:
    path = tmp_path / "small_movielens.toml"
    path.write_text(SMALL_CONFIG.format(
        name="toy-movielens", ratings="ratings.data", fmt="movielens-tab", extra="",
        dominant="uasimj", a=0.8, th=0.2, strategy="topsis",
    ), encoding="utf-8")
    return path


@pytest.fixture
def filmtrust_config_file(tmp_path, experiment_files) -> Path:
    path = tmp_path / "small_filmtrust.toml"
    path.write_text(SMALL_CONFIG.format(
        name="toy-filmtrust", ratings="ft_ratings.txt", fmt="filmtrust-space",
        extra='trust_path = "ft_trust.txt"\nnormalize_to = [1.0, 5.0]',
        dominant="taj", a=0.6, th=0.8, strategy="knn",
    ), encoding="utf-8")
    return path


@pytest.fixture
def ledger_session():
    """In-memory ledger database session."""
    engine = create_engine("sqlite://", echo=False)
    SQLModel.metadata.create_all(engine)
    with Session(engine) as session:
        yield session
    engine.dispose()
