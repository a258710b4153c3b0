from pydantic import BaseModel, Field

from app.schemas.enums import DominantMeasure, SimilarityMeasure


class UASimParams(BaseModel):
    """Uncertainty-aware similarity constants."""

    w: float = Field(default=2.0, gt=0, description="Evidence weight of the uncertainty term")
    beta: float = Field(default=0.5, ge=0, le=1, description="Share of uncertainty credited as similarity")


class CbsParams(BaseModel):
    """Composite similarity: blend below the threshold, dominant measure above it."""

    dominant: DominantMeasure = Field(default=DominantMeasure.UASIMJ)
    a: float = Field(default=0.8, ge=0, le=1, description="Blend weight on the dominant measure")
    th: float = Field(default=0.2, description="Reliability threshold on the dominant measure")

    @classmethod
    def uasimj_preset(cls) -> "CbsParams":
        """UASIMJ dominant, TAJ secondary (MovieLens setting)."""
        return cls(dominant=DominantMeasure.UASIMJ, a=0.8, th=0.2)

    @classmethod
    def taj_preset(cls) -> "CbsParams":
        """TAJ dominant, UASIM secondary (FilmTrust setting)."""
        return cls(dominant=DominantMeasure.TAJ, a=0.6, th=0.8)


class SimilarityConfig(BaseModel):
    measure: SimilarityMeasure = Field(default=SimilarityMeasure.CBS)
    uasim: UASimParams = Field(default_factory=UASimParams)
    cbs: CbsParams = Field(default_factory=CbsParams)

    def with_measure(self, measure: SimilarityMeasure) -> "SimilarityConfig":
        return self.model_copy(update={"measure": measure})

    @property
    def label(self) -> str:
        return self.measure.value
