"""One handler per subcommand: load config, run the stage, emit CSV, record the run."""

import argparse
import logging
import sys
import time
from typing import Callable, Optional

from sqlalchemy.exc import SQLAlchemyError

from app.core.config import get_settings
from app.core.exceptions import CBSFError, ConfigError, GroupError
from app.core.text_utils import write_text
from app.db.audit import log_run
from app.db.database import get_session, init_db
from app.schemas.enums import NeighborStrategy, PipelineVariant
from app.schemas.experiment import ExperimentConfig
from app.schemas.metrics import MetricReport, PredictionReport, reports_to_csv
from app.services import experiment_service
from app.services.experiment_service import ExperimentContext

logger = logging.getLogger(__name__)

# (csv text, data rows)
StageResult = tuple[str, int]


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config from --config or --preset, with --seed applied to split and group seeds."""
    if getattr(args, "config", None) and getattr(args, "preset", None):
        raise ConfigError("use either --config or --preset, not both")
    if getattr(args, "config", None):
        config = ExperimentConfig.from_toml(args.config)
    elif getattr(args, "preset", None):
        config = ExperimentConfig.from_preset(args.preset)
    else:
        raise ConfigError("no configuration: pass --config <file.toml> or --preset <name>")
    if getattr(args, "seed", None) is not None:
        config = config.with_seed(args.seed)
    return config


def parse_members(raw: str) -> list[int]:
    """Parse a comma-separated member list such as '12,40,7'."""
    try:
        members = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as e:
        raise GroupError(f"--members must be comma-separated user ids, got '{raw}'") from e
    if not members:
        raise GroupError("--members is empty")
    return members


def _record(
    command: str,
    config: Optional[ExperimentConfig],
    workers: int,
    output_path: Optional[str],
    started: float,
    rows_written: Optional[int] = None,
    error: Optional[CBSFError] = None,
) -> None:
    if not get_settings().run_audit_enabled:
        return
    try:
        init_db()
        for session in get_session():
            log_run(
                session=session,
                command=command,
                config_data=config.model_dump(mode="json") if config is not None else {},
                preset=config.preset if config is not None else None,
                seed=config.split.seed if config is not None else None,
                workers=workers,
                output_path=output_path,
                rows_written=rows_written,
                duration_ms=int((time.perf_counter() - started) * 1000),
                status="error" if error is not None else "success",
                error_message=error.message if error is not None else None,
            )
    except SQLAlchemyError as e:
        logger.warning(f"Run ledger unavailable, {command} run not recorded: {e}")


def _run(
    command: str,
    args: argparse.Namespace,
    stage: Callable[[ExperimentContext], StageResult],
    require_trust: bool = False,
) -> int:
    settings = get_settings()
    workers = args.workers if getattr(args, "workers", None) else settings.workers
    output_path = getattr(args, "out", None)
    started = time.perf_counter()
    config = None
    try:
        config = load_config(args)
        ctx = ExperimentContext(config, workers=workers, require_trust=require_trust)
        text, rows = stage(ctx)
        write_text(text, output_path)
    except CBSFError as e:
        logger.error(f"{command} failed: {e.message}")
        _record(command, config, workers, output_path, started, error=e)
        print(f"error[{e.category}]: {e.message}", file=sys.stderr)
        return e.exit_code

    logger.info(f"{command}: {rows} rows in {time.perf_counter() - started:.1f}s")
    _record(command, config, workers, output_path, started, rows_written=rows)
    return 0


def _strategy(args: argparse.Namespace) -> Optional[NeighborStrategy]:
    raw = getattr(args, "strategy", None)
    return NeighborStrategy(raw) if raw else None


def _variant(args: argparse.Namespace) -> PipelineVariant:
    if getattr(args, "baseline", False) and getattr(args, "baseline_borda", False):
        raise ConfigError("--baseline and --baseline-borda are mutually exclusive")
    if getattr(args, "baseline", False):
        return PipelineVariant.BASELINE
    if getattr(args, "baseline_borda", False):
        return PipelineVariant.BASELINE_BORDA
    return PipelineVariant.PROPOSED


def cmd_predict_eval(args: argparse.Namespace) -> int:
    """RMSE/MAE for every measure x neighbour strategy."""

    def stage(ctx: ExperimentContext) -> StageResult:
        reports = experiment_service.run_predict_eval(ctx)
        return reports_to_csv(reports, PredictionReport), len(reports)

    return _run("predict-eval", args, stage)


def cmd_group_eval(args: argparse.Namespace) -> int:
    """Group metrics per n_top for the proposed pipeline or a baseline variant."""

    def stage(ctx: ExperimentContext) -> StageResult:
        reports = experiment_service.run_group_eval(ctx, _variant(args), _strategy(args))
        return reports_to_csv(reports, MetricReport), len(reports)

    return _run("group-eval", args, stage)


def cmd_novelty_eval(args: argparse.Namespace) -> int:
    """Novelty, NTC and NTR per n_top; refuses to run without a trust file."""

    def stage(ctx: ExperimentContext) -> StageResult:
        reports = experiment_service.run_novelty_eval(ctx, _strategy(args))
        return reports_to_csv(reports, MetricReport), len(reports)

    return _run("novelty-eval", args, stage, require_trust=True)


def cmd_recommend(args: argparse.Namespace) -> int:
    def stage(ctx: ExperimentContext) -> StageResult:
        members = parse_members(args.members)
        rec = experiment_service.run_recommend(ctx, members, _strategy(args))
        return rec.to_csv(with_provenance=True), len(rec.items)

    return _run("recommend", args, stage)


def cmd_split(args: argparse.Namespace) -> int:
    def stage(ctx: ExperimentContext) -> StageResult:
        return experiment_service.run_split(ctx), ctx.matrix.n_ratings

    return _run("split", args, stage)


COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "predict-eval": cmd_predict_eval,
    "group-eval": cmd_group_eval,
    "novelty-eval": cmd_novelty_eval,
    "recommend": cmd_recommend,
    "split": cmd_split,
}
