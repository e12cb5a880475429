"""Command-line interface: ``ibfsi run``, ``ibfsi study`` and ``ibfsi verify``."""

import argparse
import logging
import sys
from typing import List, Optional

from .config import ScenarioConfig, StudyConfig
from .exceptions import ConfigError, InteractionRuleError, InvertedElementError, SolverFailure
from .scenarios import run_scenario
from .study import ConvergenceStudy
from .verification import run_verification

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ibfsi", description="Immersed-boundary fluid-structure benchmarks")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity (default: INFO)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one benchmark scenario")
    run.add_argument("config", help="Scenario YAML file")
    run.add_argument("--output-dir", default=None, help="Override output.directory")
    run.add_argument("--progress", action="store_true", help="Show a progress bar over time steps")

    study = commands.add_parser("study", help="Run a convergence study")
    study.add_argument("study", help="Study YAML file")
    study.add_argument("--output-dir", default=None, help="Override output_dir")
    study.add_argument("--parallel", action="store_true", help="Run tasks on a local dask cluster")

    commands.add_parser("verify", help="Run the quick property checks")
    return parser


def _run(args: argparse.Namespace) -> int:
    config = ScenarioConfig.from_yaml(args.config)
    if args.progress:
        config.output.show_progress = True
    return run_scenario(config, args.output_dir)


def _study(args: argparse.Namespace) -> int:
    study = StudyConfig.from_yaml(args.study)
    if args.parallel:
        study.parallel = True
    orders = ConvergenceStudy(study).run(args.output_dir)
    logger.info(f"Observed orders:\n{orders.to_dataframe().dropna().to_string()}")
    return EXIT_OK


def _verify(args: argparse.Namespace) -> int:
    results = run_verification()
    failed = [r for r in results if not r.passed]
    if failed:
        logger.error(f"{len(failed)} of {len(results)} checks failed")
        return EXIT_VERIFY_FAILED
    logger.info(f"All {len(results)} checks passed")
    return EXIT_OK


COMMANDS = {"run": _run, "study": _study, "verify": _verify}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (SolverFailure, InvertedElementError, InteractionRuleError) as e:
        logger.error(f"Solver failure: {e}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
