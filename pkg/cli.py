"""
Command-line entry point.

    python cli.py list
    python cli.py validate configs/euclid_shrinking_circle.toml
    python cli.py run configs/euclid_shrinking_circle.toml [--resume]
    python cli.py props [--output props.json]
    python cli.py suite [--force]

Exit codes: 0 all checks passed, 2 a check failed, 1 error or interrupt.
"""

import argparse
import logging
import sys
from typing import List, Optional

import colorlog

import artifacts
from config import RunConfig, describe_config_error, load_config, scenario_hash
from errors import ConfigError, LevelSetError
from experiments import list_scenarios
from operators import property_suite
from orchestrator import ExperimentOrchestrator
from run_ledger import open_ledger
from worker_pool import WorkerPool

logger = logging.getLogger("levelset")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK_FAILED = 2

LOG_FORMAT = "%(log_color)s%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(level: str = "INFO") -> None:
    """Install a coloured console handler on the root logger."""
    handler = colorlog.StreamHandler()
    handler.setFormatter(colorlog.ColoredFormatter(LOG_FORMAT))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level.upper())


def _load(path: str, args: argparse.Namespace) -> RunConfig:
    cfg = load_config(path)
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["seed"] = args.seed
    return cfg.model_copy(update=overrides) if overrides else cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args.config, args)
    if args.log_level is None:
        logging.getLogger().setLevel(cfg.log_level)
    sc = cfg.resolve_scenario()
    config_hash = scenario_hash(sc)
    ledger = open_ledger("sqlite", cfg.output_dir / "ledger.db")
    orchestrator = ExperimentOrchestrator(cfg.output_dir, ledger=ledger, progress=args.progress)
    pool = WorkerPool(num_workers=sc.solver.workers) if sc.solver.workers > 1 else None
    try:
        summary = orchestrator.run_one(sc, force=True, checkpoint_every=cfg.checkpoint_every,
                                       resume=args.resume, pool=pool)
    except KeyboardInterrupt:
        checkpoint = ledger.latest_checkpoint(config_hash)
        where = f"; resume from {checkpoint['path']}" if checkpoint else ""
        logger.error(f"Interrupted{where}")
        return EXIT_ERROR
    finally:
        if pool is not None:
            pool.stop()

    report = summary["report"]
    print(f"{sc.name}: {summary['status']} ({report.elapsed:.1f}s)")
    for check in report.checks:
        mark = {True: "PASS", False: "FAIL", None: "INFO"}[check.passed]
        print(f"  [{mark}] {check.name}: value={check.value} tolerance={check.tolerance}")
    if report.error:
        print(f"  error: {report.error}")
        return EXIT_ERROR
    if summary["report_path"]:
        print(f"  report: {summary['report_path']}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = _load(args.config, args)
    sc = cfg.resolve_scenario()
    print(f"{args.config}: OK  scenario={sc.name} procedure={sc.procedure.value} "
          f"resolution={sc.resolution} hash={scenario_hash(sc)[:12]}")
    return EXIT_OK


def cmd_props(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 0
    reports = property_suite(seed=seed)
    document = {
        "format": artifacts.PROPERTY_FORMAT,
        "format_version": artifacts.SCHEMA_VERSION,
        "seed": seed,
        "passed": all(r.passed for r in reports),
        "reports": [r.to_dict() for r in reports],
    }
    path = artifacts.write_property_report(document, args.output)
    for r in reports:
        print(f"  [{'PASS' if r.passed else 'FAIL'}] {r.check} ({r.operator}): "
              f"{len(r.violations)}/{r.trials} violations")
    print(f"property report: {path}")
    return EXIT_OK if document["passed"] else EXIT_CHECK_FAILED


def cmd_list(args: argparse.Namespace) -> int:
    scenarios = list_scenarios()
    width = max(len(sc.name) for sc in scenarios)
    for sc in scenarios:
        print(f"{sc.name:<{width}}  {sc.procedure.value:<14}  {sc.description}")
    return EXIT_OK


def cmd_suite(args: argparse.Namespace) -> int:
    orchestrator = ExperimentOrchestrator(args.output_dir, num_workers=args.workers or 1,
                                          resolution=args.resolution, progress=args.progress)
    outcome = orchestrator.run_suite(args.scenarios or None, force=args.force)
    for summary in outcome["results"]:
        print(f"  {summary['status']:<8} {summary['scenario']}")
    print(f"passed={outcome['passed']} failed={outcome['failed']} errors={outcome['errors']} "
          f"skipped={outcome['skipped']}")
    stats = orchestrator.get_overall_stats()
    logger.info(f"Ledger: {stats['ledger']['by_status']}, worker time "
                f"{stats['workers']['total_execution_time']:.1f}s")
    if outcome["errors"]:
        return EXIT_ERROR
    return EXIT_CHECK_FAILED if outcome["failed"] else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levelset", description="Level-set curvature flow on surfaces")
    parser.add_argument("--seed", type=int, default=None, help="seed for randomized suites")
    parser.add_argument("--workers", type=int, default=None, help="worker threads")
    parser.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--progress", action="store_true", help="show progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario from a config file")
    run.add_argument("config")
    run.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    run.set_defaults(handler=cmd_run)

    validate = sub.add_parser("validate", help="parse a config file and resolve its names")
    validate.add_argument("config")
    validate.set_defaults(handler=cmd_validate)

    props = sub.add_parser("props", help="run the operator property suites")
    props.add_argument("--output", default="props_report.json")
    props.set_defaults(handler=cmd_props)

    listing = sub.add_parser("list", help="list registered scenarios")
    listing.set_defaults(handler=cmd_list)

    suite = sub.add_parser("suite", help="run registered scenarios")
    suite.add_argument("scenarios", nargs="*")
    suite.add_argument("--output-dir", default="./runs")
    suite.add_argument("--resolution", type=int, default=None)
    suite.add_argument("--force", action="store_true", help="rerun completed scenarios")
    suite.set_defaults(handler=cmd_suite)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level or "INFO")
    try:
        return args.handler(args)
    except ConfigError as e:
        source = getattr(args, "config", None)
        print(describe_config_error(e, source), file=sys.stderr)
        return EXIT_ERROR
    except (LevelSetError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR
    except KeyboardInterrupt:
        logger.error("Interrupted")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
