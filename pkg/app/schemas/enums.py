from enum import Enum


class DatasetFormat(str, Enum):
    MOVIELENS_TAB = "movielens-tab"
    FILMTRUST_SPACE = "filmtrust-space"


class SimilarityMeasure(str, Enum):
    COSINE = "cosine"
    JACCARD = "jaccard"
    TAJ = "taj"
    UASIM = "uasim"
    UASIMJ = "uasimj"
    CBS = "cbs"


class DominantMeasure(str, Enum):
    """Dominant component of the composite CBS similarity.

    UASIMJ pairs with TAJ as secondary; TAJ pairs with UASIM as secondary.
    """
    UASIMJ = "uasimj"
    TAJ = "taj"


class NeighborStrategy(str, Enum):
    KNN = "knn"
    TOPSIS = "topsis"


class Provenance(int, Enum):
    """Origin of a prediction-matrix cell."""
    OBSERVED = 0
    PREDICTED = 1
    MISSING = 2

    @property
    def label(self) -> str:
        return self.name.lower()


class SplitRole(str, Enum):
    TRAIN = "train"
    TEST = "test"


class PipelineVariant(str, Enum):
    """Group-evaluation variants.

    PROPOSED uses the configured similarity and Borda enrichment; BASELINE is
    the cosine reimplementation without Borda; BASELINE_BORDA adds Borda back.
    """
    PROPOSED = "proposed"
    BASELINE = "baseline"
    BASELINE_BORDA = "baseline-borda"
