"""Deterministic worker simulation driven by a manual clock.

``SimulatedWorkers`` subscribes to a ``ManualClock``: every time the
controller sleeps, the harness assigns pending tasks to free slots and
completes whichever runs are due, at their exact finish times. Task durations
and metrics come from caller-supplied functions of the task, so whole
controller runs are reproducible to the microsecond.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from .clock import ManualClock
from .fabric.broker import Broker, Task
from .fabric.rewards import RewardRecord


@dataclass
class _Running:
    task_id: int
    worker_id: str
    finish_at: float


class SimulatedWorkers:
    def __init__(self, broker: Broker, clock: ManualClock, parallelism: int,
                 duration_fn: Callable[[Task], float],
                 metrics_fn: Callable[[Task], Mapping[str, float]],
                 fail_fn: Callable[[Task], str | None] | None = None) -> None:
        self.broker = broker
        self.clock = clock
        self.parallelism = parallelism
        self.duration_fn = duration_fn
        self.metrics_fn = metrics_fn
        self.fail_fn = fail_fn
        self._running: list[_Running] = []
        self._free = [f"sim-{i}" for i in range(parallelism)]
        clock.on_advance(self.pump)
        clock.add_event_source(self.next_finish)

    def pump(self, now: float) -> None:
        """Complete due runs, then fill free slots; repeat until stable."""
        while True:
            due = sorted((r for r in self._running if r.finish_at <= now),
                         key=lambda r: (r.finish_at, r.task_id))
            for run in due:
                self._running.remove(run)
                task = self.broker.get(run.task_id)
                failure = self.fail_fn(task) if self.fail_fn else None
                if failure is not None:
                    self.broker.report(run.task_id, run.worker_id, failure=failure)
                else:
                    metrics = {k: float(v) for k, v in self.metrics_fn(task).items()}
                    self.broker.report(run.task_id, run.worker_id,
                                       result=RewardRecord(train_metrics=metrics))
                self._free.append(run.worker_id)
            started = False
            while self._free:
                worker_id = self._free[0]
                task = self.broker.reserve(worker_id, lease_ttl=1e12)
                if task is None:
                    break
                self._free.pop(0)
                self.broker.begin(task.task_id, worker_id)
                self._running.append(_Running(
                    task_id=task.task_id, worker_id=worker_id,
                    finish_at=now + float(self.duration_fn(task))))
                started = True
            if not started and not any(r.finish_at <= now for r in self._running):
                return

    def next_finish(self) -> float | None:
        if not self._running:
            return None
        return min(r.finish_at for r in self._running)

    @property
    def busy(self) -> int:
        return len(self._running)
