"""Experiment configuration: TOML files and the two shipped presets."""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from app.core.config import get_settings
from app.core.exceptions import ConfigError
from app.schemas.enums import DatasetFormat, NeighborStrategy, SimilarityMeasure
from app.schemas.group import CandidateConfig
from app.schemas.neighbors import TopsisParams
from app.schemas.similarity import SimilarityConfig

PRESETS = ("movielens100k", "filmtrust")


class DatasetSection(BaseModel):
    name: str = Field(..., min_length=1, description="Dataset label used in report rows")
    ratings_path: str = Field(..., min_length=1)
    format: DatasetFormat
    trust_path: Optional[str] = Field(default=None, description="Trust edges (u v t), optional")
    normalize_to: Optional[tuple[float, float]] = Field(
        default=None,
        description="Affine target scale [lo, hi] applied before any similarity",
    )

    @field_validator("normalize_to")
    @classmethod
    def _ordered_scale(cls, value: Optional[tuple[float, float]]) -> Optional[tuple[float, float]]:
        if value is not None and not value[1] > value[0]:
            raise ValueError("normalize_to must satisfy hi > lo")
        return value


class SplitSection(BaseModel):
    test_ratio: float = Field(default=0.2, gt=0, lt=1)
    seed: int = Field(default_factory=lambda: get_settings().default_seed, ge=0)
    min_train: int = Field(default=5, ge=1, description="Users with this many ratings or fewer keep all in train")


class NeighborSection(BaseModel):
    strategy: NeighborStrategy = Field(default=NeighborStrategy.TOPSIS)
    k: int = Field(default=100, ge=1)
    topsis: TopsisParams = Field(default_factory=TopsisParams)


class GroupSection(BaseModel):
    n_groups: int = Field(default=120, ge=1)
    min_size: int = Field(default=3, ge=1)
    max_size: int = Field(default=30, ge=1)
    seed: int = Field(default=7, ge=0)

    @model_validator(mode="after")
    def _size_range(self) -> "GroupSection":
        if self.min_size > self.max_size:
            raise ValueError(f"min_size ({self.min_size}) exceeds max_size ({self.max_size})")
        return self


class EvaluationSection(BaseModel):
    n_top_sweep: list[int] = Field(default_factory=lambda: [5, 10, 15, 20, 25, 30, 35, 40], min_length=1)
    measures: list[SimilarityMeasure] = Field(
        default_factory=lambda: [
            SimilarityMeasure.COSINE,
            SimilarityMeasure.TAJ,
            SimilarityMeasure.UASIM,
            SimilarityMeasure.UASIMJ,
            SimilarityMeasure.CBS,
        ],
        min_length=1,
    )
    strategies: list[NeighborStrategy] = Field(
        default_factory=lambda: [NeighborStrategy.KNN, NeighborStrategy.TOPSIS],
        min_length=1,
    )

    @field_validator("n_top_sweep")
    @classmethod
    def _positive_sweep(cls, sweep: list[int]) -> list[int]:
        if any(n < 1 for n in sweep):
            raise ValueError("every n_top must be >= 1")
        return sorted(set(sweep))


class ExperimentConfig(BaseModel):
    """Everything one experiment run needs; seeds are always explicit."""

    preset: Optional[str] = None
    dataset: DatasetSection
    split: SplitSection = Field(default_factory=SplitSection)
    similarity: SimilarityConfig = Field(default_factory=SimilarityConfig)
    neighbors: NeighborSection = Field(default_factory=NeighborSection)
    candidates: CandidateConfig = Field(default_factory=CandidateConfig)
    groups: GroupSection = Field(default_factory=GroupSection)
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)

    @classmethod
    def from_mapping(cls, data: dict[str, Any], preset: Optional[str] = None) -> "ExperimentConfig":
        """Validate a raw mapping, turning pydantic errors into a ConfigError naming the fields."""
        if preset is not None:
            data = {**data, "preset": preset}
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in e.errors()
            )
            raise ConfigError(f"invalid configuration: {problems}") from e

    @classmethod
    def from_toml(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        return cls.from_mapping(data)

    @classmethod
    def from_preset(cls, name: str) -> "ExperimentConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset '{name}'. Available presets: {', '.join(PRESETS)}")
        text = resources.files("app.presets").joinpath(f"{name}.toml").read_text(encoding="utf-8")
        return cls.from_mapping(tomllib.loads(text), preset=name)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Replace both the split seed and the group-generation seed."""
        if seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed}")
        return self.model_copy(
            update={
                "split": self.split.model_copy(update={"seed": seed}),
                "groups": self.groups.model_copy(update={"seed": seed}),
            }
        )

    def resolve(self, raw: str) -> Path:
        path = Path(raw)
        if path.is_absolute():
            return path
        return get_settings().data_path / path

    @property
    def ratings_file(self) -> Path:
        return self.resolve(self.dataset.ratings_path)

    @property
    def trust_file(self) -> Optional[Path]:
        if not self.dataset.trust_path:
            return None
        return self.resolve(self.dataset.trust_path)

    def check_files(self, require_trust: bool = False) -> None:
        """Raise ConfigError naming the field of any referenced file that is absent."""
        if not self.ratings_file.is_file():
            raise ConfigError(f"dataset.ratings_path: file not found: {self.ratings_file}")
        trust = self.trust_file
        if require_trust and trust is None:
            raise ConfigError(
                "dataset.trust_path: a trust file is required for this command; "
                "set dataset.trust_path in the config or use the filmtrust preset"
            )
        if trust is not None and not trust.is_file():
            raise ConfigError(f"dataset.trust_path: file not found: {trust}")
