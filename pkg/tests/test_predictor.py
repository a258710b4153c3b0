"""
Tests for neighbourhood prediction and the effective-rating matrix.
"""

import numpy as np
import pandas as pd
import pytest

from app.schemas.dataset import GroupSpec
from app.schemas.enums import NeighborStrategy, Provenance, SimilarityMeasure
from app.schemas.similarity import SimilarityConfig
from app.services.dataset_service import RatingMatrix, split_per_user
from app.services.neighbor_service import neighbors
from app.services.prediction_service import (
    Predictor,
    effective_rating,
    predict_matrix,
    predict_rating,
)
from app.services.similarity_service import SimilarityTable, build_similarity_table
from tests.conftest import matrix_from_rows


def two_user_table(score: float) -> SimilarityTable:
    return SimilarityTable(np.array([1, 2]), np.array([score]), np.array([1]), np.array([4]))


@pytest.fixture
def small_pair():
    """User 1 has mean 3; user 2 has mean 3.5 and rated item 3 at 5."""
    return matrix_from_rows([(1, 1, 2), (1, 2, 4), (2, 1, 2), (2, 3, 5), (2, 4, 3.5)])


@pytest.fixture
def split(random_matrix):
    return split_per_user(random_matrix, 0.2, seed=7)


class TestPredictRating:
    """Test the single-cell prediction formula."""

    def test_single_neighbor(self, small_pair):
        """Test 3 + 0.9 * 1.5 / 0.9 = 4.5."""
        assert predict_rating(1, 3, [2], two_user_table(0.9), small_pair) == pytest.approx(4.5)

    def test_zero_deviation_gives_user_mean(self):
        """Test neighbours rating at their own mean leave r_bar_u."""
        m = matrix_from_rows([(1, 1, 2), (1, 2, 4), (2, 3, 3), (2, 4, 3)])
        assert predict_rating(1, 3, [2], two_user_table(0.7), m) == pytest.approx(3.0)

    def test_empty_neighborhood(self, small_pair):
        """Test no neighbours means no prediction."""
        assert predict_rating(1, 3, [], two_user_table(0.9), small_pair) is None

    def test_zero_similarity_mass(self, small_pair):
        """Test all-zero similarities are treated as no neighbours."""
        assert predict_rating(1, 3, [2], two_user_table(0.0), small_pair) is None

    def test_negative_similarity_kept(self):
        """Test a negative neighbour pulls the prediction the other way: 3 - 0.5 * 1.5 / 0.5."""
        m = matrix_from_rows([(1, 1, 2), (1, 2, 4), (2, 1, 2), (2, 3, 5), (2, 4, 3.5), (3, 9, 1)])
        table = SimilarityTable(np.array([1, 2, 3]), np.array([-0.5, 0.0, 0.0]), np.ones(3), np.ones(3))
        assert predict_rating(1, 3, [2], table, m) == pytest.approx(1.5)

    def test_clamped_to_scale(self):
        """Test predictions never leave [r_min, r_max]."""
        m = matrix_from_rows([(1, 1, 5), (1, 2, 5), (1, 5, 4), (2, 1, 1), (2, 3, 5)])
        assert predict_rating(1, 3, [2], two_user_table(1.0), m) == 5.0

    def test_equal_similarities_cancel(self, random_matrix):
        """Test equal positive weights give r_bar_u plus the mean deviation."""
        raters = [v for v in random_matrix.users_of(5).tolist() if v != 1][:4]
        n = random_matrix.n_users
        table = SimilarityTable(
            random_matrix.user_ids,
            np.full(n * (n - 1) // 2, 0.3),
            np.ones(n * (n - 1) // 2, dtype=np.int64),
            np.ones(n * (n - 1) // 2, dtype=np.int64),
        )
        deviations = [random_matrix.rating(v, 5) - random_matrix.mean(v) for v in raters]
        expected = np.clip(random_matrix.mean(1) + np.mean(deviations), random_matrix.r_min, random_matrix.r_max)
        assert predict_rating(1, 5, raters, table, random_matrix) == pytest.approx(expected)

    def test_order_invariant(self, random_matrix):
        """Test reversing the neighbour list changes nothing."""
        table = build_similarity_table(random_matrix, SimilarityConfig(measure=SimilarityMeasure.COSINE))
        raters = [v for v in random_matrix.users_of(7).tolist() if v != 2]
        forward = predict_rating(2, 7, raters, table, random_matrix)
        assert predict_rating(2, 7, list(reversed(raters)), table, random_matrix) == forward


class TestPredictor:
    """Test whole-row prediction."""

    @pytest.mark.parametrize("strategy", list(NeighborStrategy))
    def test_rows_match_cell_formula(self, split, strategy):
        """Test every predicted cell equals predict_rating over the selected neighbours."""
        train = split.train
        table = build_similarity_table(train, SimilarityConfig())
        predictor = Predictor(train, table, strategy, k=5)
        for u in train.user_ids[:8].tolist():
            values, flags = predictor.row(u)
            for col, i in enumerate(train.item_ids.tolist()):
                if flags[col] == Provenance.OBSERVED.value:
                    continue
                nbrs = neighbors(u, i, 5, strategy, table, train)
                expected = predict_rating(u, i, nbrs, table, train)
                if expected is None:
                    assert np.isnan(values[col])
                    assert flags[col] == Provenance.MISSING.value
                else:
                    assert values[col] == pytest.approx(expected, abs=1e-10)
                    assert flags[col] == Provenance.PREDICTED.value

    def test_observed_cells_are_training_ratings(self, split):
        """Test observed cells copy the training rating exactly."""
        train = split.train
        pm = predict_matrix(GroupSpec(id=0, members=(1, 2, 3)), 10, NeighborStrategy.KNN,
                            build_similarity_table(train, SimilarityConfig()), train)
        for u in (1, 2, 3):
            for i, r in zip(train.items_of(u).tolist(), train.ratings_of(u).tolist()):
                assert pm.effective_rating(u, i) == r
                assert pm.provenance_of(u, i) == Provenance.OBSERVED

    def test_predictions_within_scale(self, split):
        """Test every non-missing cell lies in [r_min, r_max]."""
        train = split.train
        predictor = Predictor(train, build_similarity_table(train, SimilarityConfig()), NeighborStrategy.TOPSIS, 20)
        pm = predictor.matrix(train.user_ids.tolist())
        present = pm.values[~np.isnan(pm.values)]
        assert present.min() >= train.r_min
        assert present.max() <= train.r_max

    def test_unrated_item_missing_for_everyone(self):
        """Test an item absent from training is missing for all members."""
        frame = pd.DataFrame([(1, 1, 4), (1, 2, 3), (2, 1, 5), (2, 2, 2)], columns=["user", "item", "rating"])
        m = RatingMatrix.from_frame(frame, items=[1, 2, 3])
        table = build_similarity_table(m, SimilarityConfig(measure=SimilarityMeasure.COSINE))
        pm = predict_matrix(GroupSpec(id=0, members=(1, 2)), 5, NeighborStrategy.KNN, table, m)
        assert pm.effective_rating(1, 3) is None
        assert pm.effective_rating(2, 3) is None
        assert pm.provenance_of(1, 3) == Provenance.MISSING

    def test_worker_count_does_not_change_rows(self, split):
        """Test 1, 4 and 8 threads give bit-identical matrices."""
        train = split.train
        table = build_similarity_table(train, SimilarityConfig())
        users = train.user_ids.tolist()
        results = [Predictor(train, table, NeighborStrategy.TOPSIS, 10).matrix(users, workers=w) for w in (1, 4, 8)]
        for other in results[1:]:
            assert np.array_equal(other.values, results[0].values, equal_nan=True)
            assert np.array_equal(other.provenance, results[0].provenance)

    def test_mismatched_table_rejected(self, random_matrix, toy_matrix):
        """Test a table from another user universe is refused."""
        table = build_similarity_table(toy_matrix, SimilarityConfig(measure=SimilarityMeasure.COSINE))
        with pytest.raises(ValueError):
            Predictor(random_matrix, table, NeighborStrategy.KNN, 5)


class TestLeakage:
    """Test that test ratings never reach the training side."""

    def test_perturbing_test_ratings_changes_nothing(self, random_matrix):
        """Test tables, means and predictions are identical after rewriting every test rating."""
        split = split_per_user(random_matrix, 0.2, seed=21)
        frame = random_matrix.to_frame()
        test_pairs = set(zip(split.test_frame["user"], split.test_frame["item"]))
        perturbed = frame.copy()
        is_test = [(u, i) in test_pairs for u, i in zip(frame["user"], frame["item"])]
        perturbed.loc[is_test, "rating"] = 6 - perturbed.loc[is_test, "rating"]
        other = split_per_user(RatingMatrix.from_frame(perturbed), 0.2, seed=21)

        assert np.array_equal(other.train.means, split.train.means)
        config = SimilarityConfig()
        table_a = build_similarity_table(split.train, config)
        table_b = build_similarity_table(other.train, config)
        assert np.array_equal(table_a.scores, table_b.scores)

        users = random_matrix.user_ids.tolist()
        pm_a = Predictor(split.train, table_a, NeighborStrategy.TOPSIS, 10).matrix(users)
        pm_b = Predictor(other.train, table_b, NeighborStrategy.TOPSIS, 10).matrix(users)
        assert np.array_equal(pm_a.values, pm_b.values, equal_nan=True)


class TestPredictionMatrix:
    """Test effective-rating access and export."""

    @pytest.fixture
    def pm(self, split):
        train = split.train
        return predict_matrix(GroupSpec(id=0, members=(4, 9)), 10, NeighborStrategy.KNN,
                              build_similarity_table(train, SimilarityConfig()), train)

    def test_effective_rating_helper(self, pm):
        """Test the module-level helper agrees with the method."""
        i = int(pm.item_ids[0])
        assert effective_rating(4, i, pm) == pm.effective_rating(4, i)

    def test_unknown_item(self, pm):
        """Test an item outside the matrix has no effective rating."""
        assert pm.effective_rating(4, 10_000) is None

    def test_export(self, pm):
        """Test the user,item,value,provenance export."""
        lines = pm.to_csv().splitlines()
        assert lines[0] == "user,item,value,provenance"
        assert len(lines) == 1 + 2 * pm.n_items
        labels = {line.rsplit(",", 1)[1] for line in lines[1:]}
        assert labels <= {"observed", "predicted", "missing"}
        assert "observed" in labels

    def test_provenance_counts(self, pm):
        """Test counts over the three flags cover every cell."""
        counts = pm.provenance_counts()
        assert sum(counts.values()) == 2 * pm.n_items
        assert counts[Provenance.MISSING] == pm.missing_count()
