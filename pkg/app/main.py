"""Entry point: `python -m app.main <subcommand> [options]`.

Reports go to stdout (or --out); logs go to stderr.
"""

import argparse
import logging
import sys
from typing import Optional, Sequence

from app.cli.commands import COMMANDS
from app.core.config import get_settings
from app.schemas.enums import NeighborStrategy
from app.schemas.experiment import PRESETS


def _add_common(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--config", help="Experiment config (TOML)")
    source.add_argument("--preset", choices=PRESETS, help="Shipped experiment preset")
    parser.add_argument("--seed", type=int, help="Override the split and group-generation seeds")
    parser.add_argument("--out", help="Write the CSV here instead of stdout")
    parser.add_argument("--workers", type=int, help="Worker threads (default: settings.workers)")


def _add_strategy(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--strategy",
        choices=[s.value for s in NeighborStrategy],
        help="Neighbour strategy for the group stages (default: neighbors.strategy of the config)",
    )


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="cbsf",
        description=f"{settings.app_name} {settings.app_version}: similarity-based group recommendation experiments",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    predict = commands.add_parser("predict-eval", help="RMSE/MAE per similarity measure and neighbour strategy")
    _add_common(predict)

    group = commands.add_parser("group-eval", help="Group satisfaction, deviation and fairness per n_top")
    _add_common(group)
    _add_strategy(group)
    variant = group.add_mutually_exclusive_group()
    variant.add_argument("--baseline", action="store_true", help="Cosine reimplementation without Borda enrichment")
    variant.add_argument("--baseline-borda", action="store_true", help="Cosine reimplementation with Borda enrichment")

    novelty = commands.add_parser("novelty-eval", help="Novelty, NTC and NTR per n_top (needs trust data)")
    _add_common(novelty)
    _add_strategy(novelty)

    rec = commands.add_parser("recommend", help="Top-N list with Choquet scores for one group")
    _add_common(rec)
    _add_strategy(rec)
    rec.add_argument("--members", required=True, help="Comma-separated user ids, e.g. 12,40,7")

    split = commands.add_parser("split", help="Emit the user,item,role manifest of the configured split")
    _add_common(split)
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(get_settings().log_level)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
