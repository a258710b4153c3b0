from typing import ClassVar, Optional

from pydantic import BaseModel, Field

from app.core.text_utils import render_csv


class PredictionAccuracy(BaseModel):
    """MAE/RMSE over test cells that received a prediction (None when there were none)."""

    mae: Optional[float] = Field(default=None, ge=0)
    rmse: Optional[float] = Field(default=None, ge=0)
    evaluated: int = Field(..., ge=0)
    skipped: int = Field(default=0, ge=0, description="Test cells left unpredicted")


class PredictionReport(BaseModel):
    """One predict-eval row: a similarity measure under one neighbour strategy."""

    HEADER: ClassVar[tuple[str, ...]] = (
        "dataset", "method", "strategy", "k", "rmse", "mae", "evaluated", "skipped",
    )

    dataset: str
    method: str
    strategy: str
    k: int
    rmse: Optional[float] = Field(default=None, ge=0)
    mae: Optional[float] = Field(default=None, ge=0)
    evaluated: int = Field(..., ge=0)
    skipped: int = Field(default=0, ge=0)

    def as_row(self) -> tuple:
        return tuple(getattr(self, name) for name in self.HEADER)


class MetricReport(BaseModel):
    """Group-level metrics averaged over all evaluated groups for one n_top."""

    HEADER: ClassVar[tuple[str, ...]] = (
        "dataset", "method", "strategy", "n_top", "satisfaction", "rmse_g", "mae_g",
        "fairness1", "fairness2", "novelty", "ntc", "ntr", "skipped",
    )

    dataset: str
    method: str
    strategy: str
    n_top: int = Field(..., ge=1)
    satisfaction: Optional[float] = None
    rmse_g: Optional[float] = Field(default=None, ge=0)
    mae_g: Optional[float] = Field(default=None, ge=0)
    fairness1: Optional[float] = Field(default=None, gt=0, le=1)
    fairness2: Optional[float] = Field(default=None, le=1)
    novelty: Optional[float] = Field(default=None, ge=0, le=1)
    ntc: Optional[float] = Field(default=None, ge=0, le=1)
    ntr: Optional[float] = Field(default=None, description="Reported as computed; exceeds 1 when trusted raters disagree")
    skipped: int = Field(default=0, ge=0, description="Missing cells skipped while scoring")

    def as_row(self) -> tuple:
        return tuple(getattr(self, name) for name in self.HEADER)


def reports_to_csv(reports: list[BaseModel], model: type[BaseModel]) -> str:
    """Render report rows under the fixed header of `model` (header only when empty)."""
    return render_csv(model.HEADER, (report.as_row() for report in reports))
