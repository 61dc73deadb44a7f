"""
Tests for the worker pool, run ledger and experiment orchestrator

Run with: python -m pytest test_infrastructure.py -v
"""

import logging
import os
import tempfile
import threading
import time

import pytest

import experiments
from errors import ConfigError
from experiments import get_scenario
from orchestrator import ExperimentOrchestrator, report_status
from run_ledger import InMemoryLedger, SQLiteLedger, open_ledger
from worker_pool import Task, WorkerPool, row_chunks


class TestRowChunks:
    """Tests for grid row partitioning"""

    def test_covers_rows_in_order(self):
        """Chunks are contiguous, ordered and near-equal"""
        chunks = row_chunks(10, 3)
        assert chunks == [slice(0, 4), slice(4, 7), slice(7, 10)]

    def test_more_parts_than_rows(self):
        """Never more chunks than rows"""
        assert len(row_chunks(2, 8)) == 2
        assert row_chunks(5, 0) == [slice(0, 5)]


class TestWorkerPool:
    """Tests for the worker pool"""

    def test_map_ordered(self):
        """Results come back in item order whatever the finishing order"""
        def slow_square(x):
            time.sleep(0.01 * (5 - x))
            return x * x

        with WorkerPool(num_workers=4) as pool:
            assert pool.map_ordered(slow_square, range(5)) == [0, 1, 4, 9, 16]
            assert pool.get_stats()["mapped_items"] == 5

    def test_map_serial_for_one_worker(self):
        """One worker runs on the calling thread"""
        pool = WorkerPool(num_workers=1)
        threads = pool.map_ordered(lambda _: threading.current_thread(), range(3))
        assert all(t is threading.current_thread() for t in threads)
        assert not pool.is_running

    def test_invalid_worker_count(self):
        """Zero workers is refused"""
        with pytest.raises(ValueError):
            WorkerPool(num_workers=0)

    def test_run_tasks_keeps_order(self):
        """Tasks finishing out of order come back in submission order"""
        def echo(params):
            time.sleep(0.01 * (5 - params["value"]))
            return params["value"] * 2

        with WorkerPool(num_workers=3) as pool:
            pool.register_handler("echo", echo)
            results = pool.run_tasks([Task(task_id=f"t{i}", task_type="echo", params={"value": i})
                                      for i in range(6)])

        assert [r.task_id for r in results] == [f"t{i}" for i in range(6)]
        assert [r.data for r in results] == [0, 2, 4, 6, 8, 10]
        assert all(r.success for r in results)

    def test_worker_pool_error_handling(self, caplog):
        """A failing handler becomes a failed result, not an exception"""
        caplog.set_level(logging.INFO, logger="worker_pool")
        pool = WorkerPool(num_workers=2)
        pool.register_handler("ok", lambda params: "ok")
        pool.register_handler("broken", lambda params: 1 / 0)
        results = pool.run_tasks([
            Task(task_id="ok", task_type="ok", params={}),
            Task(task_id="broken", task_type="broken", params={}),
            Task(task_id="unknown", task_type="missing", params={}),
        ])
        pool.stop()

        assert results[0].success and results[0].data == "ok"
        assert not results[1].success
        assert "division by zero" in results[1].error
        assert "No handler registered" in results[2].error

        stats = pool.get_stats()
        assert stats["total_tasks"] == 3
        assert stats["completed_tasks"] == 1
        assert stats["failed_tasks"] == 2
        messages = [record.getMessage() for record in caplog.records]
        assert "Executing task ok (type: ok)" in messages
        assert any(m.startswith("Task broken failed: division by zero") for m in messages)


class TestRunLedger:
    """Tests for run ledgers"""

    def _exercise(self, ledger):
        ledger.record_checkpoint("abc", "circle", 100, 0.01, "/runs/circle/front/checkpoint.lsf")
        ledger.record_checkpoint("abc", "circle", 200, 0.02, "/runs/circle/front/checkpoint.lsf")
        assert not ledger.has_run("abc")
        assert ledger.latest_checkpoint("abc")["step_index"] == 200
        assert ledger.latest_checkpoint("other") is None

        ledger.record_run("abc", "circle", "error", error_message="BlowUp: boom")
        assert not ledger.has_run("abc")
        assert ledger.latest_checkpoint("abc") is not None

        ledger.record_run("abc", "circle", "failed", report_path="/runs/circle/report.json",
                          metadata={"failed_checks": ["extinction_time"]})
        assert ledger.has_run("abc")
        assert ledger.latest_checkpoint("abc") is None

        stats = ledger.get_stats()
        assert stats["total_runs"] == 2
        assert stats["by_status"] == {"error": 1, "failed": 1}
        assert stats["checkpoints"] == 2
        assert stats["last_run"] is not None

    def test_in_memory_ledger(self):
        """Test in-memory ledger"""
        self._exercise(InMemoryLedger())

    def test_sqlite_ledger(self):
        """Test SQLite ledger"""
        with tempfile.TemporaryDirectory() as tmpdir:
            db_path = os.path.join(tmpdir, "nested", "ledger.db")
            ledger = SQLiteLedger(db_path)
            self._exercise(ledger)
            assert os.path.exists(db_path)
            ledger.engine.dispose()

    def test_sqlite_ledger_persists(self):
        """Records survive reopening the database"""
        with tempfile.TemporaryDirectory() as tmpdir:
            db_path = os.path.join(tmpdir, "ledger.db")
            first = SQLiteLedger(db_path)
            first.record_run("h1", "sign", "passed")
            first.engine.dispose()
            second = open_ledger("sqlite", db_path)
            assert second.has_run("h1")
            second.engine.dispose()

    def test_open_ledger(self):
        """Storage types resolve by name"""
        assert isinstance(open_ledger("memory"), InMemoryLedger)
        with pytest.raises(ValueError):
            open_ledger("postgres")


class TestOrchestrator:
    """Tests for single runs and suites"""

    def test_run_one_skips_completed(self, tmp_path):
        """A completed configuration is skipped unless forced"""
        ledger = InMemoryLedger()
        orchestrator = ExperimentOrchestrator(tmp_path, ledger=ledger)
        sc = get_scenario("revolution_supersolution_sign")

        first = orchestrator.run_one(sc)
        assert first["status"] == "passed"
        assert first["report_path"] == str(tmp_path / sc.name / "report.json")
        assert (tmp_path / sc.name / "report.json").exists()

        again = orchestrator.run_one(sc)
        assert again["skipped"]
        assert again["status"] == "skipped"

        forced = orchestrator.run_one(sc, force=True)
        assert not forced["skipped"]
        assert ledger.get_stats()["by_status"] == {"passed": 2}

    def test_errors_are_rerun(self, tmp_path, monkeypatch):
        """A run that raised is not treated as completed"""
        def explode(*args, **kwargs):
            raise RuntimeError("boom")

        ledger = InMemoryLedger()
        orchestrator = ExperimentOrchestrator(tmp_path, ledger=ledger, resolution=16)
        sc = get_scenario("euclid_shrinking_circle")
        monkeypatch.setattr(experiments, "evolve", explode)
        summary = orchestrator.run_one(sc)
        assert summary["status"] == "error"
        assert report_status(summary["report"]) == "error"
        assert not ledger.has_run(summary["config_hash"])

    def test_resume_without_checkpoint_starts_over(self, tmp_path):
        """resume with nothing recorded runs from t = 0"""
        orchestrator = ExperimentOrchestrator(tmp_path, ledger=InMemoryLedger(), resolution=16)
        summary = orchestrator.run_one(get_scenario("lipschitz_euclidean"), resume=True)
        assert summary["status"] in ("passed", "failed")

    def test_run_suite(self, tmp_path):
        """Suites run in registry order and skip what the ledger holds"""
        names = ["revolution_supersolution_sign", "invariance_cube"]
        orchestrator = ExperimentOrchestrator(tmp_path, num_workers=2, resolution=32)
        outcome = orchestrator.run_suite(names)
        assert outcome["total"] == 2
        assert [s["scenario"] for s in outcome["results"]] == names
        assert outcome["errors"] == 0
        assert outcome["results"][0]["status"] == "passed"

        rerun = orchestrator.run_suite(names)
        assert rerun["skipped"] == 2

        stats = orchestrator.get_overall_stats()
        assert stats["ledger"]["total_runs"] == 2
        assert stats["workers"]["total_tasks"] == 4

    def test_unknown_suite_member(self, tmp_path):
        """Unknown names fail before anything runs"""
        orchestrator = ExperimentOrchestrator(tmp_path, ledger=InMemoryLedger())
        with pytest.raises(ConfigError):
            orchestrator.run_suite(["revolution_supersolution_sign", "missing"])
        assert orchestrator.ledger.get_stats()["total_runs"] == 0


def test_integration():
    """Integration test: CLI-style single run through a SQLite ledger"""
    with tempfile.TemporaryDirectory() as tmpdir:
        ledger = open_ledger("sqlite", os.path.join(tmpdir, "ledger.db"))
        orchestrator = ExperimentOrchestrator(tmpdir, ledger=ledger, resolution=24)
        summary = orchestrator.run_one(get_scenario("euclid_shrinking_circle"), checkpoint_every=10)
        report = summary["report"]
        assert report.error is None
        assert ledger.has_run(summary["config_hash"])
        assert ledger.get_stats()["checkpoints"] > 0
        assert ledger.latest_checkpoint(summary["config_hash"]) is None
        ledger.engine.dispose()
