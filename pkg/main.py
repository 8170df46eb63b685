# main.py
import sys
import logging
import argparse
from typing import List, Optional

from src.errors import ConfigError, InvalidParams, SupplyChainGameError
from src.experiments import COMMANDS, load_experiment_config
from src.reporting import emit, render_csv, render_json
from config import config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DISAGREEMENT = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scgame",
        description="Pricing equilibria of a supplier and two competing manufacturers on a discrete price grid",
    )
    parser.add_argument('--log-level', default=config.LOG_LEVEL, help="logging level (default from SCGAME_LOG_LEVEL)")

    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, fn in COMMANDS.items():
        sub = subparsers.add_parser(name, help=(fn.__doc__ or "").strip())
        sub.add_argument('--config', help="flat key=value settings file")
        sub.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                         help="override one setting; repeatable")
        sub.add_argument('--out', help="output file (default: stdout)")
        sub.add_argument('--format', choices=['csv', 'json'])
        sub.add_argument('--q', type=float, help="supplier price")
        sub.add_argument('--delta', type=float, help="price denomination")
        sub.add_argument('--q-step', dest='q_step', type=float)
        sub.add_argument('--q-max', dest='q_max', type=float)
        sub.add_argument('--seed', type=int)
        sub.add_argument('--workers', type=int)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    flags = {
        'out': args.out,
        'format': args.format,
        'q': args.q,
        'delta': args.delta,
        'q_step': args.q_step,
        'q_max': args.q_max,
        'seed': args.seed,
        'workers': args.workers,
    }

    try:
        experiment = load_experiment_config(args.config, args.overrides, flags)
        result = COMMANDS[args.command](experiment)
    except (ConfigError, InvalidParams) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_CONFIG
    except SupplyChainGameError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_DISAGREEMENT

    if experiment.output.format == 'json':
        text = render_json(result.rows, result.schema, experiment.model_dump(mode='json'), result.summary)
    else:
        text = render_csv(result.rows, result.schema)
    emit(text, experiment.output.path)

    if not result.agree:
        logger.warning(f"{args.command}: closed forms and oracle disagree, see the report summary")
        return EXIT_DISAGREEMENT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(run())
