"""
Experiment Orchestrator

Ties together the scenario registry, the run ledger and the worker pool:
runs single scenarios with checkpoint bookkeeping, and runs whole suites as
parallel tasks, skipping configurations the ledger has already seen.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from tqdm import tqdm

from config import scenario_hash
from experiments import Scenario, ScenarioReport, get_scenario, list_scenarios, run_scenario
from run_ledger import RunLedger, open_ledger
from solver import SolverState
from worker_pool import Task, WorkerPool

logger = logging.getLogger(__name__)

LEDGER_FILE = "ledger.db"


def report_status(report: ScenarioReport) -> str:
    if report.error is not None:
        return "error"
    return "passed" if report.passed else "failed"


class ExperimentOrchestrator:
    """
    Runs scenarios and records them.

    Attributes:
        output_dir: artifact root; each scenario writes to output_dir/<name>
        ledger: completed runs and checkpoints
        worker_pool: pool the suite's scenarios run on
    """

    def __init__(self,
                 output_dir: Union[str, Path] = "./runs",
                 num_workers: int = 1,
                 ledger: Optional[RunLedger] = None,
                 db_path: Optional[Union[str, Path]] = None,
                 resolution: Optional[int] = None,
                 progress: bool = False):
        """
        Args:
            output_dir: artifact root
            num_workers: scenarios run concurrently by run_suite
            ledger: ledger to use; default is SQLite at output_dir/ledger.db
            db_path: SQLite path when no ledger is given
            resolution: resolution override for every scenario
            progress: show tqdm progress bars
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.ledger = ledger or open_ledger("sqlite", db_path or self.output_dir / LEDGER_FILE)
        self.worker_pool = WorkerPool(num_workers=num_workers)
        self.worker_pool.register_handler("scenario", self._handle_scenario)
        self.resolution = resolution
        self.progress = progress
        self._bar: Optional[tqdm] = None

    def scenario_dir(self, sc: Scenario) -> Path:
        return self.output_dir / sc.name

    def _prepare(self, sc: Scenario) -> Scenario:
        return sc.with_resolution(self.resolution) if self.resolution is not None else sc

    def run_one(self, sc: Scenario, force: bool = False, checkpoint_every: int = 0,
                resume: bool = False, pool: Optional[WorkerPool] = None) -> Dict[str, Any]:
        """
        Run one scenario unless the ledger already holds it.

        Args:
            sc: scenario to run
            force: run even if a completed run with the same hash exists
            checkpoint_every: checkpoint cadence in solver steps
            resume: continue from the latest unfinished checkpoint of this hash
            pool: worker pool for F evaluation inside the solver

        Returns:
            Summary dict: scenario, config_hash, status, skipped, report_path, report
        """
        sc = self._prepare(sc)
        config_hash = scenario_hash(sc)
        out = self.scenario_dir(sc)
        if not force and self.ledger.has_run(config_hash):
            logger.info(f"Skipping {sc.name}: already completed ({config_hash[:12]})")
            return {"scenario": sc.name, "config_hash": config_hash, "status": "skipped",
                    "skipped": True, "report_path": None, "report": None}

        if resume:
            checkpoint = self.ledger.latest_checkpoint(config_hash)
            if checkpoint is None:
                logger.warning(f"No checkpoint recorded for {sc.name}; starting from t=0")
                resume = False

        def on_checkpoint(path: Path, state: SolverState) -> None:
            self.ledger.record_checkpoint(config_hash, sc.name, state.step_index, state.field.time, str(path))

        report = run_scenario(sc, out, checkpoint_every=checkpoint_every, resume=resume,
                              progress=self.progress and self.worker_pool.num_workers == 1,
                              pool=pool, on_checkpoint=on_checkpoint)
        status = report_status(report)
        report_path = report.artifacts.get("report")
        self.ledger.record_run(config_hash, sc.name, status, report_path=report_path,
                               error_message=report.error,
                               metadata={"elapsed": report.elapsed, "failed_checks": report.failed_checks,
                                         "resolution": sc.resolution})
        return {"scenario": sc.name, "config_hash": config_hash, "status": status,
                "skipped": False, "report_path": report_path, "report": report}

    def _handle_scenario(self, params: Dict[str, Any]) -> Dict[str, Any]:
        try:
            return self.run_one(get_scenario(params["name"]), force=params.get("force", False))
        finally:
            if self._bar is not None:
                self._bar.update(1)

    def run_suite(self, names: Optional[Sequence[str]] = None, force: bool = False) -> Dict[str, Any]:
        """
        Run registered scenarios as pool tasks.

        Args:
            names: scenario names (default: every registered scenario)
            force: ignore the ledger's completed runs

        Returns:
            Totals plus one summary per scenario, in registry order
        """
        names = list(names) if names is not None else [sc.name for sc in list_scenarios()]
        for name in names:
            get_scenario(name)
        tasks = [Task(task_id=name, task_type="scenario", params={"name": name, "force": force})
                 for name in names]
        logger.info(f"Running suite of {len(tasks)} scenarios on {self.worker_pool.num_workers} workers")

        self._bar = tqdm(total=len(tasks), desc="suite", disable=not self.progress)
        try:
            with self.worker_pool:
                results = self.worker_pool.run_tasks(tasks)
        finally:
            self._bar.close()
            self._bar = None

        summaries: List[Dict[str, Any]] = []
        for result in results:
            if result.success:
                summaries.append(result.data)
            else:
                summaries.append({"scenario": result.task_id, "status": "error", "skipped": False,
                                  "error": result.error, "report": None, "report_path": None})
        counts: Dict[str, int] = {}
        for summary in summaries:
            counts[summary["status"]] = counts.get(summary["status"], 0) + 1
        logger.info(f"Suite finished: {counts}")
        return {
            "total": len(summaries),
            "passed": counts.get("passed", 0),
            "failed": counts.get("failed", 0),
            "errors": counts.get("error", 0),
            "skipped": counts.get("skipped", 0),
            "results": summaries,
        }

    def get_overall_stats(self) -> Dict[str, Any]:
        """Ledger and worker statistics."""
        return {
            "ledger": self.ledger.get_stats(),
            "workers": self.worker_pool.get_stats(),
        }
