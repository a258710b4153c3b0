from pydantic import BaseModel, Field, model_validator


class TopsisParams(BaseModel):
    """Criterion weights for TOPSIS neighbour selection.

    Criteria are similarity S, uncertainty U = W / (W + co_count) and
    dissimilarity S_bar = max(1 - S - U, 0).
    """

    w_s: float = Field(default=1 / 3, gt=0)
    w_u: float = Field(default=1 / 3, gt=0)
    w_sbar: float = Field(default=1 / 3, gt=0)
    W: float = Field(default=2.0, gt=0, description="Uncertainty evidence weight")

    @model_validator(mode="after")
    def _weights_sum_to_one(self) -> "TopsisParams":
        total = self.w_s + self.w_u + self.w_sbar
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"w_s + w_u + w_sbar must equal 1 (got {total})")
        return self
