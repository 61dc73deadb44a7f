"""
Parallel Worker System

Thread pool used for two jobs: evaluating the curvature operator over row
chunks of a grid inside a solver step, and running independent scenarios in
a batch. Results always come back in submission order so that parallel runs
are bitwise identical to serial ones.
"""

import time
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Dict, Any, Optional, Sequence, TypeVar
from threading import Lock
from dataclasses import dataclass
import traceback

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class Task:
    """A named scenario-level unit of work dispatched to a registered handler."""
    task_id: str
    task_type: str
    params: Dict[str, Any]


@dataclass
class TaskResult:
    """Outcome of one task; `data` is the handler's return value."""
    task_id: str
    success: bool
    data: Optional[Any] = None
    error: Optional[str] = None
    execution_time: float = 0.0


def row_chunks(n_rows: int, parts: int) -> List[slice]:
    """
    Split range(n_rows) into at most `parts` contiguous slices of near-equal size.

    Args:
        n_rows: number of grid rows
        parts: desired chunk count

    Returns:
        Slices covering every row exactly once, in order
    """
    parts = max(1, min(parts, n_rows))
    base, extra = divmod(n_rows, parts)
    chunks, start = [], 0
    for k in range(parts):
        stop = start + base + (1 if k < extra else 0)
        chunks.append(slice(start, stop))
        start = stop
    return chunks


class WorkerPool:
    """
    Fixed-size thread pool with ordered results.

    `map_ordered` serves the solver's row chunks; `run_tasks` runs scenario
    tasks through handlers registered by task type and never raises for a
    failing handler.
    """

    def __init__(self, num_workers: int = 4):
        if num_workers < 1:
            raise ValueError(f"num_workers must be positive, got {num_workers}")
        self.num_workers = num_workers
        self.executor: Optional[ThreadPoolExecutor] = None
        self.task_handlers: Dict[str, Callable[[Dict[str, Any]], Any]] = {}
        self.is_running = False

        self.stats = {
            "total_tasks": 0,
            "completed_tasks": 0,
            "failed_tasks": 0,
            "mapped_items": 0,
            "total_execution_time": 0.0,
        }
        self.stats_lock = Lock()

    def __enter__(self) -> "WorkerPool":
        self.start()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.stop()

    def register_handler(self, task_type: str, handler: Callable[[Dict[str, Any]], Any]):
        """Route tasks of `task_type` to `handler(params)`."""
        self.task_handlers[task_type] = handler

    def start(self):
        if self.is_running:
            logger.warning("Worker pool already running")
            return
        logger.debug(f"Starting worker pool with {self.num_workers} workers")
        self.is_running = True
        self.executor = ThreadPoolExecutor(max_workers=self.num_workers, thread_name_prefix="levelset")

    def stop(self, wait: bool = True):
        self.is_running = False
        if self.executor:
            self.executor.shutdown(wait=wait)
            self.executor = None
        logger.debug("Worker pool stopped")

    def map_ordered(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """
        Apply fn to every item in parallel.

        Args:
            fn: pure function of one item
            items: work items

        Returns:
            fn(item) for each item, in the order of items
        """
        items = list(items)
        with self.stats_lock:
            self.stats["mapped_items"] += len(items)
        if len(items) <= 1 or self.num_workers == 1:
            return [fn(item) for item in items]
        if not self.is_running:
            self.start()
        return list(self.executor.map(fn, items))

    def _execute_task(self, task: Task) -> TaskResult:
        start_time = time.time()
        try:
            handler = self.task_handlers.get(task.task_type)
            if not handler:
                raise ValueError(f"No handler registered for task type: {task.task_type}")

            logger.info(f"Executing task {task.task_id} (type: {task.task_type})")
            result = TaskResult(task.task_id, True, data=handler(task.params))
        except Exception as e:
            logger.error(f"Task {task.task_id} failed: {e}")
            result = TaskResult(task.task_id, False, error=f"{e}\n{traceback.format_exc()}")

        result.execution_time = time.time() - start_time
        with self.stats_lock:
            self.stats["total_execution_time"] += result.execution_time
            self.stats["completed_tasks" if result.success else "failed_tasks"] += 1
        return result

    def run_tasks(self, tasks: Sequence[Task]) -> List[TaskResult]:
        """
        Execute tasks in parallel.

        Args:
            tasks: Tasks to execute

        Returns:
            One TaskResult per task, in the order given
        """
        tasks = list(tasks)
        with self.stats_lock:
            self.stats["total_tasks"] += len(tasks)
        if not self.is_running:
            self.start()
        return list(self.executor.map(self._execute_task, tasks))

    def get_stats(self) -> Dict[str, Any]:
        """Get statistics about task execution."""
        with self.stats_lock:
            stats_copy = self.stats.copy()
            stats_copy["num_workers"] = self.num_workers
            stats_copy["is_running"] = self.is_running
            done = stats_copy["completed_tasks"]
            stats_copy["avg_execution_time"] = stats_copy["total_execution_time"] / done if done else 0.0
            return stats_copy
