from typing import ClassVar

from pydantic import BaseModel, Field

from app.core.text_utils import render_csv


class CandidateConfig(BaseModel):
    """Sizes of the per-member lists, the Borda enrichment and the final list."""

    n_filter: int = Field(default=40, ge=1, description="Per-member top-N")
    n_borda: int = Field(default=50, ge=0, description="Borda enrichment count (0 disables it)")
    n_top: int = Field(default=40, ge=1, description="Final list length")


class GroupRecommendation(BaseModel):
    """Candidate set, Choquet scores and the final ordered list for one group."""

    group_id: int
    candidates: list[int] = Field(default_factory=list)
    scores: dict[int, float] = Field(default_factory=dict)
    items: list[int] = Field(default_factory=list, description="Final top-N, best first")
    provenance: dict[int, tuple[int, int, int]] = Field(
        default_factory=dict,
        description="Per listed item: members with an observed, predicted and missing rating",
    )

    EXPORT_HEADER: ClassVar[tuple[str, ...]] = ("group_id", "rank", "item", "choquet_score")
    PROVENANCE_HEADER: ClassVar[tuple[str, ...]] = ("observed", "predicted", "missing")

    def export_rows(self, with_provenance: bool = False) -> list[tuple]:
        rows = []
        for rank, item in enumerate(self.items, start=1):
            row = (self.group_id, rank, item, self.scores[item])
            if with_provenance:
                row += self.provenance.get(item, (0, 0, 0))
            rows.append(row)
        return rows

    def to_csv(self, with_provenance: bool = False) -> str:
        header = self.EXPORT_HEADER + (self.PROVENANCE_HEADER if with_provenance else ())
        return render_csv(header, self.export_rows(with_provenance))

    def head(self, n: int) -> list[int]:
        return self.items[:n]
