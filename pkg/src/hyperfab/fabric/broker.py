"""In-process task broker with lease-based, mutually exclusive reservation.

Workers and the controller only share this broker. Reservation is atomic;
an expired lease requeues the task with an incremented attempt counter until
``max_attempts``, after which the task fails. A late success from a worker
whose lease was swept is still recorded if nobody else finished the task
first (first write wins); anything after that is an ignored duplicate.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable

from ..clock import Clock, REAL_CLOCK
from ..space import Configuration
from ..strategies.base import FidelityBudget
from .rewards import RewardRecord

logger = logging.getLogger(__name__)

DEFAULT_LEASE_TTL = 30.0
DEFAULT_MAX_ATTEMPTS = 3


class TaskState(str, Enum):
    PENDING = "PENDING"
    RESERVED = "RESERVED"
    RUNNING = "RUNNING"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"
    TIMEOUT = "TIMEOUT"  # estimator-side label; the broker never blocks on it


@dataclass
class Lease:
    worker_id: str
    expires_at: float


@dataclass
class Task:
    task_id: int
    job_id: str
    config: Configuration
    fidelity: FidelityBudget
    state: TaskState = TaskState.PENDING
    lease: Lease | None = None
    attempts: int = 1
    result: RewardRecord | None = None
    failure: str | None = None
    iteration: int = 0
    timed_out: bool = False  # estimator label, independent of broker state
    enqueued_at: float = 0.0
    started_at: float | None = None
    finished_at: float | None = None

    @property
    def resolved(self) -> bool:
        return self.state in (TaskState.COMPLETED, TaskState.FAILED)

    @property
    def duration(self) -> float | None:
        if self.started_at is None or self.finished_at is None:
            return None
        return self.finished_at - self.started_at


class BrokerError(Exception):
    pass


class UnknownTaskError(BrokerError):
    pass


class Broker:
    """Thread-safe task queue; every state change can be mirrored to an event sink."""

    def __init__(self, clock: Clock = REAL_CLOCK, lease_ttl: float = DEFAULT_LEASE_TTL,
                 max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                 on_event: Callable[[dict[str, Any]], None] | None = None,
                 next_task_id: int = 1) -> None:
        self._clock = clock
        self.lease_ttl = lease_ttl
        self.max_attempts = max_attempts
        self._on_event = on_event
        self._lock = threading.Lock()
        self._tasks: dict[int, Task] = {}
        self._next_id = next_task_id

    def _emit(self, event: dict[str, Any]) -> None:
        if self._on_event is not None:
            self._on_event(event)

    # -- producer side --------------------------------------------------------

    def publish(self, job_id: str, config: Configuration, fidelity: FidelityBudget,
                iteration: int = 0) -> Task:
        with self._lock:
            task = Task(task_id=self._next_id, job_id=job_id, config=config,
                        fidelity=fidelity, iteration=iteration,
                        enqueued_at=self._clock.now())
            self._next_id += 1
            self._tasks[task.task_id] = task
            self._emit({"type": "task_published", "task_id": task.task_id,
                        "iteration": iteration,
                        "config": dict(config.assignments),
                        "space_version": config.space_version,
                        "fidelity": {"resource": fidelity.resource,
                                     "is_final": fidelity.is_final}})
        return task

    # -- worker side -----------------------------------------------------------

    def reserve(self, worker_id: str, lease_ttl: float | None = None) -> Task | None:
        """Atomically claim the oldest PENDING task; None when the queue is empty."""
        ttl = self.lease_ttl if lease_ttl is None else lease_ttl
        with self._lock:
            for task_id in sorted(self._tasks):
                task = self._tasks[task_id]
                if task.state is TaskState.PENDING:
                    task.state = TaskState.RESERVED
                    task.lease = Lease(worker_id=worker_id,
                                       expires_at=self._clock.now() + ttl)
                    self._emit({"type": "task_reserved", "task_id": task.task_id,
                                "worker_id": worker_id, "attempt": task.attempts})
                    return task
        return None

    def begin(self, task_id: int, worker_id: str) -> None:
        with self._lock:
            task = self._get(task_id)
            if task.state is not TaskState.RESERVED or task.lease is None \
                    or task.lease.worker_id != worker_id:
                raise BrokerError(f"task {task_id} is not reserved by {worker_id}")
            task.state = TaskState.RUNNING
            task.started_at = self._clock.now()

    def renew(self, task_id: int, worker_id: str, lease_ttl: float | None = None) -> bool:
        """Heartbeat; False when the lease was lost (task swept or finished)."""
        ttl = self.lease_ttl if lease_ttl is None else lease_ttl
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None or task.lease is None or task.lease.worker_id != worker_id \
                    or task.state not in (TaskState.RESERVED, TaskState.RUNNING):
                return False
            task.lease.expires_at = self._clock.now() + ttl
            return True

    def report(self, task_id: int, worker_id: str,
               result: RewardRecord | None = None, failure: str | None = None) -> bool:
        """Record an outcome. Returns False for an ignored duplicate."""
        if (result is None) == (failure is None):
            raise BrokerError("report exactly one of result or failure")
        with self._lock:
            task = self._get(task_id)
            if task.resolved:
                logger.info("duplicate report for task %s from %s ignored", task_id, worker_id)
                self._emit({"type": "task_duplicate_report", "task_id": task_id,
                            "worker_id": worker_id})
                return False
            holds_lease = task.lease is not None and task.lease.worker_id == worker_id
            if not holds_lease and result is None:
                # stale failure for a requeued task: the retry owns it now
                logger.info("stale failure report for task %s from %s ignored",
                            task_id, worker_id)
                return False
            if result is not None:
                task.state = TaskState.COMPLETED
                task.result = result
            else:
                task.state = TaskState.FAILED
                task.failure = failure
            task.finished_at = self._clock.now()
            if task.started_at is None:
                task.started_at = task.finished_at
            task.lease = None
            self._emit({"type": "task_completed" if result is not None else "task_failed",
                        "task_id": task_id, "worker_id": worker_id,
                        "failure": failure,
                        "duration": task.duration})
            return True

    def sweep_leases(self, now: float | None = None) -> list[int]:
        """Requeue expired leases; at max_attempts the task fails instead."""
        now = self._clock.now() if now is None else now
        requeued = []
        with self._lock:
            for task in self._tasks.values():
                if task.state in (TaskState.RESERVED, TaskState.RUNNING) \
                        and task.lease is not None and task.lease.expires_at <= now:
                    worker = task.lease.worker_id
                    task.lease = None
                    if task.attempts >= self.max_attempts:
                        task.state = TaskState.FAILED
                        task.failure = f"lease expired after {task.attempts} attempts"
                        task.finished_at = now
                        if task.started_at is None:
                            task.started_at = now
                        self._emit({"type": "task_failed", "task_id": task.task_id,
                                    "worker_id": worker, "failure": task.failure,
                                    "duration": task.duration})
                    else:
                        task.attempts += 1
                        task.state = TaskState.PENDING
                        task.started_at = None
                        self._emit({"type": "task_requeued", "task_id": task.task_id,
                                    "worker_id": worker, "attempt": task.attempts})
                        requeued.append(task.task_id)
        return requeued

    # -- queries ----------------------------------------------------------------

    def _get(self, task_id: int) -> Task:
        task = self._tasks.get(task_id)
        if task is None:
            raise UnknownTaskError(f"unknown task id {task_id}")
        return task

    def get(self, task_id: int) -> Task:
        with self._lock:
            return self._get(task_id)

    def tasks(self) -> list[Task]:
        with self._lock:
            return [self._tasks[i] for i in sorted(self._tasks)]

    def pending_count(self) -> int:
        with self._lock:
            return sum(1 for t in self._tasks.values() if t.state is TaskState.PENDING)

    def unresolved(self, task_ids: list[int]) -> list[int]:
        with self._lock:
            return [i for i in task_ids if not self._tasks[i].resolved]

    def mark_timeout(self, task_id: int) -> None:
        """Estimator-side label only; never blocks a later COMPLETED record."""
        with self._lock:
            task = self._get(task_id)
            task.timed_out = True
            self._emit({"type": "task_timeout", "task_id": task_id})
