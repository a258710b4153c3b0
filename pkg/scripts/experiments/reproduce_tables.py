"""
Script to run every experiment stage on both presets and save the CSV reports.

For each preset and seed it writes the prediction-accuracy report, the group
report for the proposed pipeline under both neighbour strategies, both
cosine baselines, and (FilmTrust only) the novelty report. A JSON summary of
the run is written next to the reports.

Usage:
    python scripts/experiments/reproduce_tables.py [--seeds 42 43 44] [--workers 8]

Datasets are read from settings.data_dir (DATA_DIR), reports go to
settings.output_dir (OUTPUT_DIR)/reproduction.
"""

import argparse
import json
from datetime import datetime
from pathlib import Path
from typing import Callable

from app.core.config import get_settings
from app.core.exceptions import CBSFError
from app.core.text_utils import write_text
from app.schemas.enums import NeighborStrategy, PipelineVariant
from app.schemas.experiment import PRESETS, ExperimentConfig
from app.schemas.metrics import MetricReport, PredictionReport, reports_to_csv
from app.services import experiment_service
from app.services.experiment_service import ExperimentContext


def get_stages(preset: str) -> list[tuple[str, Callable[[ExperimentContext], str]]]:
    """(report name, stage) pairs for one preset."""
    stages = [
        ("predict", lambda ctx: reports_to_csv(experiment_service.run_predict_eval(ctx), PredictionReport)),
    ]
    for strategy in NeighborStrategy:
        for variant in PipelineVariant:
            stages.append((
                f"group_{variant.value}_{strategy.value}",
                lambda ctx, v=variant, s=strategy: reports_to_csv(
                    experiment_service.run_group_eval(ctx, v, s), MetricReport
                ),
            ))
    if preset == "filmtrust":
        stages.append((
            "novelty",
            lambda ctx: reports_to_csv(experiment_service.run_novelty_eval(ctx), MetricReport),
        ))
    return stages


def run_preset(preset: str, seed: int, workers: int, output_dir: Path) -> tuple[int, int]:
    """Run every stage for one preset and seed; returns (successful, failed)."""
    config = ExperimentConfig.from_preset(preset).with_seed(seed)
    try:
        ctx = ExperimentContext(config, workers=workers, require_trust=preset == "filmtrust")
    except CBSFError as e:
        print(f"  ✗ {preset}: {e.message}")
        return 0, len(get_stages(preset))

    successful = failed = 0
    for name, stage in get_stages(preset):
        started = datetime.now()
        print(f"[{preset} seed={seed}] {name} ...")
        try:
            target = output_dir / f"{preset}_seed{seed}_{name}.csv"
            write_text(stage(ctx), target)
        except CBSFError as e:
            print(f"  ✗ Error: {e.message}")
            failed += 1
            continue
        print(f"  ✓ Saved to: {target.name} ({(datetime.now() - started).total_seconds():.1f}s)")
        successful += 1
    return successful, failed


def reproduce_tables(seeds: list[int], workers: int) -> None:
    settings = get_settings()
    output_dir = settings.output_path / "reproduction"
    output_dir.mkdir(parents=True, exist_ok=True)
    print(f"Data directory: {settings.data_path.absolute()}")
    print(f"Output directory: {output_dir.absolute()}\n")
    print("=" * 80)

    start_time = datetime.now()
    successful = failed = 0
    for preset in PRESETS:
        for seed in seeds:
            ok, bad = run_preset(preset, seed, workers, output_dir)
            successful += ok
            failed += bad
    duration = (datetime.now() - start_time).total_seconds()

    print("\n" + "=" * 80)
    print("\nReproduction complete!")
    print(f"  Reports written: {successful}")
    print(f"  Failed: {failed}")
    print(f"  Duration: {duration:.2f} seconds")

    summary_file = output_dir / "_reproduction_summary.json"
    summary_file.write_text(json.dumps({
        "run_date": start_time.isoformat(),
        "presets": list(PRESETS),
        "seeds": seeds,
        "workers": workers,
        "successful": successful,
        "failed": failed,
        "duration_seconds": duration,
    }, indent=2), encoding="utf-8")
    print(f"Summary saved to: {summary_file.name}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run every experiment stage on both presets")
    parser.add_argument("--seeds", type=int, nargs="+", default=[42, 43, 44])
    parser.add_argument("--workers", type=int, default=get_settings().workers)
    args = parser.parse_args()
    reproduce_tables(args.seeds, args.workers)
