"""Experiment orchestration shared by the CLI subcommands.

An ExperimentContext loads one dataset, normalises and splits it, and
memoises similarity tables and predictors so every stage of a run reuses
them. Group evaluations run on a thread pool; results are collected in
group-id order and averaged with math.fsum, so reports do not depend on the
worker count.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

from app.core.exceptions import ConfigError, GroupError
from app.core.utils import fsum_mean
from app.schemas.dataset import GroupSpec
from app.schemas.enums import NeighborStrategy, PipelineVariant, SimilarityMeasure
from app.schemas.experiment import ExperimentConfig
from app.schemas.group import CandidateConfig, GroupRecommendation
from app.schemas.metrics import MetricReport, PredictionReport
from app.schemas.similarity import SimilarityConfig
from app.services import metrics_service
from app.services.dataset_service import (
    RatingMatrix,
    Split,
    TrustGraph,
    generate_groups,
    load_ratings,
    load_trust,
    normalize_scale,
    split_per_user,
)
from app.services.group_service import FuzzyCapacity, recommend
from app.services.prediction_service import PredictionMatrix, Predictor
from app.services.similarity_service import SimilarityTable, build_similarity_table

logger = logging.getLogger(__name__)


class ExperimentContext:
    """Dataset, split and memoised artefacts for one configuration."""

    def __init__(self, config: ExperimentConfig, workers: int = 1, require_trust: bool = False) -> None:
        config.check_files(require_trust=require_trust)
        self.config = config
        self.workers = max(1, workers)
        self._tables: dict[str, SimilarityTable] = {}
        self._predictors: dict[tuple, Predictor] = {}

    @cached_property
    def matrix(self) -> RatingMatrix:
        """Full rating matrix, mapped onto the configured scale when one is set."""
        m = load_ratings(self.config.ratings_file, self.config.dataset.format)
        if self.config.dataset.normalize_to is not None:
            lo, hi = self.config.dataset.normalize_to
            m = normalize_scale(m, lo, hi)
            logger.info(f"Normalised ratings to [{lo}, {hi}]")
        return m

    @cached_property
    def trust(self) -> Optional[TrustGraph]:
        trust_file = self.config.trust_file
        return load_trust(trust_file) if trust_file is not None else None

    @cached_property
    def split(self) -> Split:
        s = self.config.split
        return split_per_user(self.matrix, s.test_ratio, s.seed, s.min_train)

    @property
    def train(self) -> RatingMatrix:
        return self.split.train

    @cached_property
    def groups(self) -> list[GroupSpec]:
        g = self.config.groups
        return generate_groups(self.matrix, g.n_groups, g.min_size, g.max_size, g.seed)

    def table(self, similarity: SimilarityConfig) -> SimilarityTable:
        key = similarity.model_dump_json()
        if key not in self._tables:
            self._tables[key] = build_similarity_table(self.train, similarity, workers=self.workers)
        return self._tables[key]

    def predictor(self, similarity: SimilarityConfig, strategy: NeighborStrategy) -> Predictor:
        key = (similarity.model_dump_json(), NeighborStrategy(strategy).value)
        if key not in self._predictors:
            neighbors = self.config.neighbors
            self._predictors[key] = Predictor(
                self.train,
                self.table(similarity),
                strategy,
                neighbors.k,
                neighbors.topsis,
            )
        return self._predictors[key]


@dataclass(frozen=True)
class GroupPipeline:
    """Similarity, neighbour strategy and candidate sizes of one group-evaluation row set."""

    method: str
    similarity: SimilarityConfig
    strategy: NeighborStrategy
    candidates: CandidateConfig


def pipeline_for(
    config: ExperimentConfig,
    variant: PipelineVariant = PipelineVariant.PROPOSED,
    strategy: Optional[NeighborStrategy] = None,
) -> GroupPipeline:
    """
    Resolve a variant into concrete settings.

    The baseline is the cosine reimplementation without Borda enrichment;
    baseline-borda restores the enrichment.
    """
    variant = PipelineVariant(variant)
    strategy = NeighborStrategy(strategy or config.neighbors.strategy)
    n_top = max(config.evaluation.n_top_sweep + [config.candidates.n_top])
    candidates = config.candidates.model_copy(update={"n_top": n_top})
    if variant == PipelineVariant.PROPOSED:
        return GroupPipeline(config.similarity.label, config.similarity, strategy, candidates)

    cosine = config.similarity.with_measure(SimilarityMeasure.COSINE)
    if variant == PipelineVariant.BASELINE:
        return GroupPipeline(
            "cosine-reimplementation",
            cosine,
            strategy,
            candidates.model_copy(update={"n_borda": 0}),
        )
    return GroupPipeline("cosine-reimplementation-borda", cosine, strategy, candidates)


def run_predict_eval(ctx: ExperimentContext) -> list[PredictionReport]:
    """RMSE/MAE on the test split for every configured measure x strategy."""
    config = ctx.config
    users = ctx.train.user_ids.tolist()
    reports = []
    for measure in config.evaluation.measures:
        similarity = config.similarity.with_measure(measure)
        for strategy in config.evaluation.strategies:
            started = time.perf_counter()
            pm = ctx.predictor(similarity, strategy).matrix(users, ctx.workers)
            accuracy = metrics_service.mae_rmse(pm, ctx.split)
            logger.info(
                f"{similarity.label}/{strategy.value}: RMSE={accuracy.rmse} MAE={accuracy.mae} "
                f"({accuracy.evaluated} cells, {accuracy.skipped} skipped, {time.perf_counter() - started:.1f}s)"
            )
            reports.append(PredictionReport(
                dataset=config.dataset.name,
                method=similarity.label,
                strategy=strategy.value,
                k=config.neighbors.k,
                rmse=accuracy.rmse,
                mae=accuracy.mae,
                evaluated=accuracy.evaluated,
                skipped=accuracy.skipped,
            ))
    return reports


@dataclass
class _GroupOutcome:
    recommendation: GroupRecommendation
    pm: PredictionMatrix
    capacity: FuzzyCapacity


def _check_members(m: RatingMatrix, members: Sequence[int]) -> None:
    unknown = [u for u in members if not m.has_user(u)]
    if unknown:
        raise GroupError(f"unknown users: {', '.join(str(u) for u in unknown)}")


def recommend_for_group(
    ctx: ExperimentContext,
    group: GroupSpec,
    pipeline: GroupPipeline,
) -> _GroupOutcome:
    _check_members(ctx.train, group.members)
    predictor = ctx.predictor(pipeline.similarity, pipeline.strategy)
    pm = predictor.matrix(group.members)
    cap = FuzzyCapacity.from_training(group.members, ctx.train)
    rec = recommend(group, pm, pipeline.candidates, cap)
    return _GroupOutcome(rec, pm, cap)


def _evaluate_groups(
    ctx: ExperimentContext,
    pipeline: GroupPipeline,
    with_trust: bool,
) -> list[MetricReport]:
    config = ctx.config
    groups = ctx.groups
    predictor = ctx.predictor(pipeline.similarity, pipeline.strategy)
    predictor.warm((u for g in groups for u in g.members), ctx.workers)

    trust_table = None
    if with_trust:
        cbs = config.similarity.with_measure(SimilarityMeasure.CBS)
        trust_table = ctx.table(cbs)

    started = time.perf_counter()
    with ThreadPoolExecutor(max_workers=ctx.workers) as pool:
        outcomes = list(pool.map(lambda g: recommend_for_group(ctx, g, pipeline), groups))
    logger.info(f"Recommended for {len(groups)} groups ({pipeline.method}) in {time.perf_counter() - started:.1f}s")

    reports = []
    for n_top in config.evaluation.n_top_sweep:
        rows: dict[str, list] = {name: [] for name in (
            "satisfaction", "rmse_g", "mae_g", "fairness1", "fairness2", "novelty", "ntc", "ntr",
        )}
        skipped = 0
        for group, outcome in zip(groups, outcomes):
            items = outcome.recommendation.head(n_top)
            if not items:
                logger.warning(f"Group {group.id}: no scorable candidates")
                continue
            pm, cap = outcome.pm, outcome.capacity
            skipped += pm.missing_count(items)
            rows["satisfaction"].append(metrics_service.group_pref(group, items, pm))
            rows["rmse_g"].append(metrics_service.rmse_g(group, items, pm, cap))
            rows["mae_g"].append(metrics_service.mae_g(group, items, pm, cap))
            rows["fairness1"].append(metrics_service.fairness_jain(group, items, pm))
            rows["fairness2"].append(metrics_service.fairness_var(group, items, pm))
            if with_trust:
                rows["novelty"].append(metrics_service.novelty(items, ctx.matrix))
                rows["ntc"].append(metrics_service.ntc(items, ctx.matrix, ctx.trust))
                rows["ntr"].append(metrics_service.ntr(items, ctx.matrix, ctx.trust, trust_table))

        averages = {name: fsum_mean(v for v in values if v is not None) for name, values in rows.items()}
        reports.append(MetricReport(
            dataset=config.dataset.name,
            method=pipeline.method,
            strategy=pipeline.strategy.value,
            n_top=n_top,
            skipped=skipped,
            **averages,
        ))
    return reports


def run_group_eval(
    ctx: ExperimentContext,
    variant: PipelineVariant = PipelineVariant.PROPOSED,
    strategy: Optional[NeighborStrategy] = None,
) -> list[MetricReport]:
    """Group satisfaction, deviation and fairness per n_top, averaged over generated groups."""
    return _evaluate_groups(ctx, pipeline_for(ctx.config, variant, strategy), with_trust=False)


def run_novelty_eval(
    ctx: ExperimentContext,
    strategy: Optional[NeighborStrategy] = None,
) -> list[MetricReport]:
    """Every group metric plus Novelty, NTC and NTR for the CBS pipeline."""
    if ctx.trust is None:
        raise ConfigError(
            "dataset.trust_path: novelty-eval needs a trust file; "
            "set dataset.trust_path in the config or use the filmtrust preset"
        )
    config = ctx.config.model_copy(update={
        "similarity": ctx.config.similarity.with_measure(SimilarityMeasure.CBS),
    })
    return _evaluate_groups(ctx, pipeline_for(config, PipelineVariant.PROPOSED, strategy), with_trust=True)


def run_recommend(
    ctx: ExperimentContext,
    members: Sequence[int],
    strategy: Optional[NeighborStrategy] = None,
    group_id: int = 0,
) -> GroupRecommendation:
    """Top-N list with Choquet scores for an ad-hoc group under the configured pipeline."""
    if not members:
        raise GroupError("a group needs at least one member")
    try:
        group = GroupSpec(id=group_id, members=tuple(members))
    except ValueError as e:
        raise GroupError(f"invalid group: {e}") from e
    config = ctx.config
    pipeline = GroupPipeline(
        config.similarity.label,
        config.similarity,
        NeighborStrategy(strategy or config.neighbors.strategy),
        config.candidates,
    )
    outcome = recommend_for_group(ctx, group, pipeline)
    counts = outcome.pm.provenance_counts(outcome.recommendation.items)
    logger.info(
        f"Group {group.members}: {len(outcome.recommendation.candidates)} candidates, "
        f"{len(outcome.recommendation.items)} listed; cells "
        + ", ".join(f"{p.label}={n}" for p, n in counts.items())
    )
    return outcome.recommendation


def run_split(ctx: ExperimentContext) -> str:
    """`user,item,role` manifest of the configured split."""
    return ctx.split.to_manifest()
