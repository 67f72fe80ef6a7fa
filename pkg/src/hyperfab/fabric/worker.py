"""Worker pool: reserve, evaluate (subprocess or callable), heartbeat, report.

Workers never talk to the controller; the broker is the only shared state.
Killing a worker is abrupt: it stops heartbeating and never reports, so its
lease expires and the task is requeued elsewhere. The search continues as
long as one worker stays alive.
"""

from __future__ import annotations

import logging
import threading
from typing import Callable, Mapping

from ..clock import Clock, REAL_CLOCK
from .broker import Broker, Task
from .evaluator import EvaluatorError, deploy_probe, evaluate
from .rewards import RewardRecord

logger = logging.getLogger(__name__)


class Worker:
    def __init__(self, worker_id: str, broker: Broker,
                 evaluator: "str | list[str] | Callable[[Task], Mapping[str, float]]",
                 clock: Clock = REAL_CLOCK, lease_ttl: float | None = None,
                 poll_interval: float = 0.02, probe_cmd: str | list[str] | None = None,
                 artifact_dir: str = "", eval_timeout: float | None = None) -> None:
        self.worker_id = worker_id
        self.broker = broker
        self.evaluator = evaluator
        self.clock = clock
        self.lease_ttl = broker.lease_ttl if lease_ttl is None else lease_ttl
        self.poll_interval = poll_interval
        self.probe_cmd = probe_cmd
        self.artifact_dir = artifact_dir
        self.eval_timeout = eval_timeout
        self._stop = threading.Event()
        self._killed = threading.Event()
        self._thread: threading.Thread | None = None

    # -- lifecycle -------------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, name=self.worker_id, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        """Graceful: finish the current task, then exit."""
        self._stop.set()

    def kill(self) -> None:
        """Abrupt death: no further reports, lease left to expire."""
        self._killed.set()
        self._stop.set()

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    @property
    def alive(self) -> bool:
        return self._thread is not None and self._thread.is_alive() and not self._killed.is_set()

    # -- main loop ---------------------------------------------------------------

    def _loop(self) -> None:
        backoff = self.poll_interval
        while not self._stop.is_set():
            task = self.broker.reserve(self.worker_id, self.lease_ttl)
            if task is None:
                self.clock.sleep(backoff)
                backoff = min(backoff * 1.5, 0.5)
                continue
            backoff = self.poll_interval
            self._run_task(task)

    def _run_task(self, task: Task) -> None:
        self.broker.begin(task.task_id, self.worker_id)
        heartbeat_stop = threading.Event()
        heartbeat = threading.Thread(
            target=self._heartbeat, args=(task.task_id, heartbeat_stop), daemon=True)
        heartbeat.start()
        try:
            record, failure = self._evaluate(task)
        finally:
            heartbeat_stop.set()
        if self._killed.is_set():
            return  # died mid-task: never report, let the lease expire
        if failure is not None:
            self.broker.report(task.task_id, self.worker_id, failure=failure)
        else:
            self.broker.report(task.task_id, self.worker_id, result=record)

    def _heartbeat(self, task_id: int, stop: threading.Event) -> None:
        interval = self.lease_ttl / 3.0
        while not stop.wait(interval):
            if self._killed.is_set():
                return
            if not self.broker.renew(task_id, self.worker_id, self.lease_ttl):
                return

    def _evaluate(self, task: Task) -> tuple[RewardRecord | None, str | None]:
        try:
            if callable(self.evaluator):
                metrics = dict(self.evaluator(task))
                record = RewardRecord(train_metrics={k: float(v) for k, v in metrics.items()})
            else:
                record = evaluate(self.evaluator, task, artifact_dir=self.artifact_dir,
                                  timeout=self.eval_timeout)
        except EvaluatorError as exc:
            return None, str(exc)
        except Exception as exc:  # callable evaluators may raise anything
            return None, f"evaluator raised {type(exc).__name__}: {exc}"
        if self.probe_cmd is not None and record.artifact:
            try:
                record.deploy_metrics = deploy_probe(record.artifact, self.probe_cmd,
                                                     timeout=self.eval_timeout)
            except EvaluatorError as exc:
                logger.warning("probe failed for task %s: %s", task.task_id, exc)
                record.probe_failed = True  # constrained metrics count as limit x2
        return record, None


class WorkerPool:
    """Fixed set of workers sharing one broker."""

    def __init__(self, broker: Broker, evaluator, n_workers: int,
                 clock: Clock = REAL_CLOCK, lease_ttl: float | None = None,
                 probe_cmd: str | list[str] | None = None, artifact_dir: str = "",
                 eval_timeout: float | None = None, poll_interval: float = 0.02) -> None:
        self.workers = [
            Worker(f"worker-{i}", broker, evaluator, clock=clock, lease_ttl=lease_ttl,
                   probe_cmd=probe_cmd, artifact_dir=artifact_dir,
                   eval_timeout=eval_timeout, poll_interval=poll_interval)
            for i in range(n_workers)
        ]

    def start(self) -> None:
        for worker in self.workers:
            worker.start()

    def stop(self, join: bool = True) -> None:
        for worker in self.workers:
            worker.stop()
        if join:
            for worker in self.workers:
                worker.join(timeout=5.0)

    def kill(self, worker_ids: list[int]) -> None:
        for i in worker_ids:
            self.workers[i].kill()

    @property
    def alive_count(self) -> int:
        return sum(1 for w in self.workers if w.alive)
