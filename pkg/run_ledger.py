"""
Run Ledger

Tracks completed scenario runs and the checkpoints written while they ran,
so that batch suites skip finished work and `run --resume` can find the
latest checkpoint for a configuration. Supports SQLite (via SQLAlchemy) and
in-memory storage.
"""

import logging
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from threading import Lock
from typing import Any, Dict, Iterator, List, Optional, Union

from sqlalchemy import JSON, Boolean, Column, DateTime, Float, Integer, String, Text, create_engine, func
from sqlalchemy.orm import Session, declarative_base, sessionmaker

logger = logging.getLogger(__name__)

Base = declarative_base()

COMPLETED_STATUSES = ("passed", "failed")


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class RunRecord(Base):
    """
    One finished scenario run.

    Attributes:
        config_hash: sha256 of the resolved scenario
        scenario: scenario name
        status: passed, failed (a check failed) or error (the run raised)
        report_path: where report.json was written
        error_message: error text when status is error
        run_metadata: free-form details (elapsed time, failed checks)
    """
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    config_hash = Column(String(64), nullable=False, index=True)
    scenario = Column(String(200), nullable=False)
    status = Column(String(20), nullable=False)
    report_path = Column(Text)
    error_message = Column(Text)
    recorded_at = Column(DateTime, default=_utcnow, nullable=False)
    run_metadata = Column(JSON)


class CheckpointRecord(Base):
    """A checkpoint file written during a run."""
    __tablename__ = "checkpoints"

    id = Column(Integer, primary_key=True, autoincrement=True)
    config_hash = Column(String(64), nullable=False, index=True)
    scenario = Column(String(200), nullable=False)
    step_index = Column(Integer, nullable=False)
    sim_time = Column(Float, nullable=False)
    path = Column(Text, nullable=False)
    finished = Column(Boolean, default=False, nullable=False)
    recorded_at = Column(DateTime, default=_utcnow, nullable=False)


class RunLedger:
    """
    Base class for run ledgers.

    Records are plain dicts with the column names of RunRecord and
    CheckpointRecord.
    """

    def __init__(self, name: str = "runs"):
        self.name = name
        self.lock = Lock()

    def has_run(self, config_hash: str) -> bool:
        """True if a run of this configuration completed (passed or failed)."""
        raise NotImplementedError

    def record_run(self, config_hash: str, scenario: str, status: str,
                   report_path: Optional[str] = None, error_message: Optional[str] = None,
                   metadata: Optional[Dict[str, Any]] = None):
        raise NotImplementedError

    def record_checkpoint(self, config_hash: str, scenario: str, step_index: int,
                          sim_time: float, path: str):
        raise NotImplementedError

    def latest_checkpoint(self, config_hash: str) -> Optional[Dict[str, Any]]:
        """Most recent checkpoint of a configuration, or None."""
        raise NotImplementedError

    def get_stats(self) -> Dict[str, Any]:
        raise NotImplementedError


def _checkpoint_dict(record: CheckpointRecord) -> Dict[str, Any]:
    return {
        "config_hash": record.config_hash,
        "scenario": record.scenario,
        "step_index": record.step_index,
        "sim_time": record.sim_time,
        "path": record.path,
        "recorded_at": record.recorded_at.isoformat() if record.recorded_at else None,
    }


class SQLiteLedger(RunLedger):
    """SQLite-backed ledger for persistent storage."""

    def __init__(self, db_path: Union[str, Path] = "runs.db", name: str = "runs", echo: bool = False):
        """
        Args:
            db_path: SQLite file; ":memory:" gives a throwaway database
            name: ledger name used in statistics
            echo: echo SQL statements (debugging)
        """
        super().__init__(name)
        self.db_path = str(db_path)
        if self.db_path != ":memory:":
            Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self.engine = create_engine(f"sqlite:///{self.db_path}", echo=echo)
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)
        self.create_tables()

    @contextmanager
    def get_session(self) -> Iterator[Session]:
        """
        Context manager for database sessions.

        Example:
            with ledger.get_session() as session:
                session.add(record)
                session.commit()
        """
        session = self.SessionLocal()
        try:
            yield session
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()

    def create_tables(self):
        """Create missing tables; safe to call repeatedly."""
        Base.metadata.create_all(bind=self.engine)

    def has_run(self, config_hash: str) -> bool:
        with self.lock, self.get_session() as session:
            return session.query(RunRecord.id).filter(
                RunRecord.config_hash == config_hash,
                RunRecord.status.in_(COMPLETED_STATUSES),
            ).first() is not None

    def record_run(self, config_hash: str, scenario: str, status: str,
                   report_path: Optional[str] = None, error_message: Optional[str] = None,
                   metadata: Optional[Dict[str, Any]] = None):
        with self.lock, self.get_session() as session:
            session.add(RunRecord(
                config_hash=config_hash, scenario=scenario, status=status, report_path=report_path,
                error_message=error_message, run_metadata=metadata or {},
            ))
            if status in COMPLETED_STATUSES:
                session.query(CheckpointRecord).filter(
                    CheckpointRecord.config_hash == config_hash
                ).update({CheckpointRecord.finished: True})
            session.commit()
        logger.debug(f"Ledger {self.name}: {scenario} recorded as {status}")

    def record_checkpoint(self, config_hash: str, scenario: str, step_index: int,
                          sim_time: float, path: str):
        with self.lock, self.get_session() as session:
            session.add(CheckpointRecord(
                config_hash=config_hash, scenario=scenario, step_index=step_index,
                sim_time=sim_time, path=str(path),
            ))
            session.commit()

    def latest_checkpoint(self, config_hash: str) -> Optional[Dict[str, Any]]:
        with self.lock, self.get_session() as session:
            record = session.query(CheckpointRecord).filter(
                CheckpointRecord.config_hash == config_hash,
                CheckpointRecord.finished.is_(False),
            ).order_by(CheckpointRecord.step_index.desc(), CheckpointRecord.id.desc()).first()
            return _checkpoint_dict(record) if record else None

    def get_stats(self) -> Dict[str, Any]:
        with self.lock, self.get_session() as session:
            by_status = dict(session.query(RunRecord.status, func.count(RunRecord.id))
                             .group_by(RunRecord.status).all())
            checkpoints = session.query(func.count(CheckpointRecord.id)).scalar() or 0
            last = session.query(func.max(RunRecord.recorded_at)).scalar()
        return {
            "name": self.name,
            "total_runs": sum(by_status.values()),
            "by_status": by_status,
            "checkpoints": checkpoints,
            "last_run": last.isoformat() if last else None,
            "storage": "sqlite",
        }


class InMemoryLedger(RunLedger):
    """In-memory ledger for tests and throwaway runs."""

    def __init__(self, name: str = "runs"):
        super().__init__(name)
        self.runs: List[Dict[str, Any]] = []
        self.checkpoints: List[Dict[str, Any]] = []

    def has_run(self, config_hash: str) -> bool:
        with self.lock:
            return any(r["config_hash"] == config_hash and r["status"] in COMPLETED_STATUSES
                       for r in self.runs)

    def record_run(self, config_hash: str, scenario: str, status: str,
                   report_path: Optional[str] = None, error_message: Optional[str] = None,
                   metadata: Optional[Dict[str, Any]] = None):
        with self.lock:
            self.runs.append({
                "config_hash": config_hash, "scenario": scenario, "status": status,
                "report_path": report_path, "error_message": error_message,
                "recorded_at": _utcnow().isoformat(), "metadata": dict(metadata or {}),
            })
            if status in COMPLETED_STATUSES:
                for c in self.checkpoints:
                    if c["config_hash"] == config_hash:
                        c["finished"] = True

    def record_checkpoint(self, config_hash: str, scenario: str, step_index: int,
                          sim_time: float, path: str):
        with self.lock:
            self.checkpoints.append({
                "config_hash": config_hash, "scenario": scenario, "step_index": step_index,
                "sim_time": sim_time, "path": str(path), "finished": False,
                "recorded_at": _utcnow().isoformat(),
            })

    def latest_checkpoint(self, config_hash: str) -> Optional[Dict[str, Any]]:
        with self.lock:
            candidates = [c for c in self.checkpoints if c["config_hash"] == config_hash and not c["finished"]]
            if not candidates:
                return None
            latest = max(candidates, key=lambda c: c["step_index"])
            return {k: v for k, v in latest.items() if k != "finished"}

    def get_stats(self) -> Dict[str, Any]:
        with self.lock:
            by_status: Dict[str, int] = {}
            for r in self.runs:
                by_status[r["status"]] = by_status.get(r["status"], 0) + 1
            return {
                "name": self.name,
                "total_runs": len(self.runs),
                "by_status": by_status,
                "checkpoints": len(self.checkpoints),
                "last_run": self.runs[-1]["recorded_at"] if self.runs else None,
                "storage": "memory",
            }


def open_ledger(storage_type: str = "sqlite", db_path: Union[str, Path] = "runs.db") -> RunLedger:
    """
    Args:
        storage_type: "sqlite" or "memory"
        db_path: database file for SQLite
    """
    if storage_type == "sqlite":
        return SQLiteLedger(db_path)
    if storage_type == "memory":
        return InMemoryLedger()
    raise ValueError(f"unknown ledger storage '{storage_type}'")
