"""Semisynchronized job controller: batch, publish, wait adaptively, ingest.

An iteration closes when every issued task resolves or the adaptive deadline
passes. The deadline countdown starts at the first reservation of the batch,
so a job with zero live workers parks instead of spinning; it resumes as soon
as any worker reserves. Tasks past the deadline are labeled TIMEOUT and never
awaited again, but their late results are ingested in a later iteration — paid
compute is not discarded.

The deadline is ``clamp(mean + k*sqrt(var), t_min, t_max)`` over the wall-clock
durations of previously completed tasks, bucketed per fidelity. Only punctual
completions update the statistics; late stragglers would otherwise inflate the
deadline until stragglers stop being stragglers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .clock import Clock, REAL_CLOCK
from .fabric.broker import Broker, Task, TaskState
from .fabric.rewards import ObjectiveSpec, combine_reward, loss_of
from .space import SearchSpace, SpaceStore
from .strategies.base import Observation, SearchStrategy

DEFAULT_K = 2.0
DEFAULT_T_MIN = 1.0


class EstimatorError(Exception):
    pass


class RetryableIterationError(EstimatorError):
    """Broker unreachable or similar; the iteration may simply be retried."""


class LineageError(EstimatorError):
    pass


@dataclass
class DurationStats:
    """Per-fidelity running moments (population variance, Welford update)."""

    buckets: dict[str, list[float]] = field(default_factory=dict)  # key -> [n, mean, m2]

    @staticmethod
    def _key(resource: float) -> str:
        return f"{resource:.6g}"

    def update(self, resource: float, duration: float) -> None:
        acc = self.buckets.setdefault(self._key(resource), [0.0, 0.0, 0.0])
        acc[0] += 1.0
        delta = duration - acc[1]
        acc[1] += delta / acc[0]
        acc[2] += delta * (duration - acc[1])

    def moments(self, resource: float) -> tuple[int, float, float]:
        acc = self.buckets.get(self._key(resource))
        if acc is None or acc[0] == 0:
            return 0, 0.0, 0.0
        return int(acc[0]), acc[1], acc[2] / acc[0]

    def to_dict(self) -> dict[str, list[float]]:
        return {k: list(v) for k, v in self.buckets.items()}

    @staticmethod
    def from_dict(raw: Mapping[str, list[float]]) -> "DurationStats":
        return DurationStats(buckets={k: list(v) for k, v in raw.items()})


def adaptive_timeout(stats: DurationStats, k: float, t_min: float, t_max: float,
                     resource: float = 1.0) -> float:
    """Adaptive maximum waiting time; cold start waits the conservative t_max."""
    if k < 0:
        raise ValueError("k must be non-negative")
    count, mean, variance = stats.moments(resource)
    if count == 0:
        return t_max
    return min(max(mean + k * math.sqrt(variance), t_min), t_max)


@dataclass
class IterationLedger:
    index: int
    issued: list[int] = field(default_factory=list)
    completed: set[int] = field(default_factory=set)
    failed: set[int] = field(default_factory=set)
    timed_out: set[int] = field(default_factory=set)
    batch_started_at: float = 0.0
    adaptive_deadline: float | None = None  # absolute time; set at first reservation
    closed_at: float | None = None
    timeout_budget: float | None = None     # the adaptive_timeout() duration used

    @property
    def in_flight(self) -> set[int]:
        return set(self.issued) - self.completed - self.failed - self.timed_out


class JobController:
    """One sequential controller loop per job; talks only to the broker."""

    def __init__(self, job_id: str, space: SearchSpace, strategy: SearchStrategy,
                 broker: Broker, objective: ObjectiveSpec, batch_size: int,
                 max_evaluations: int, clock: Clock = REAL_CLOCK,
                 k: float = DEFAULT_K, t_min: float = DEFAULT_T_MIN, t_max: float = 3600.0,
                 poll_interval: float = 0.01, space_store: SpaceStore | None = None,
                 on_event: Callable[[dict[str, Any]], None] | None = None) -> None:
        self.job_id = job_id
        self.space = space
        self.strategy = strategy
        self.broker = broker
        self.objective = objective
        self.batch_size = batch_size
        self.max_evaluations = max_evaluations
        self.clock = clock
        self.k = k
        self.t_min = t_min
        self.t_max = t_max
        self.poll_interval = poll_interval
        self.space_store = space_store
        self._on_event = on_event
        self.stats = DurationStats()
        self.iteration = 0
        self.ledgers: list[IterationLedger] = []
        self.awaiting_late: set[int] = set()
        self.ingested: set[int] = set()
        self.status = "PENDING"
        self._stop_requested = False
        self._idle_rounds = 0
        if strategy.search_space is None:
            strategy.bind_space(space)

    # -- plumbing ---------------------------------------------------------------

    def _emit(self, event: dict[str, Any]) -> None:
        if self._on_event is not None:
            self._on_event(event)

    def observation_count(self) -> int:
        return len(self.strategy.observations)

    def best(self) -> Observation | None:
        return self.strategy.best_observation()

    def stop(self) -> None:
        self._stop_requested = True

    def apply_space_edit(self, new_space: SearchSpace) -> None:
        """Rebind the strategy to a descendant space version, effective immediately.

        In-flight tasks finish under their original version and stay valid
        observations; only candidate generation switches.
        """
        if new_space.space_id != self.space.space_id:
            raise LineageError(
                f"space {new_space.space_id!r} is unrelated to job space "
                f"{self.space.space_id!r}")
        if new_space.version == self.space.version:
            return
        if self.space_store is not None and not self.space_store.is_descendant(
                new_space.space_id, new_space.version, self.space.version):
            raise LineageError(
                f"version {new_space.version} does not descend from "
                f"{self.space.version}")
        self.space = new_space
        self.strategy.bind_space(new_space)
        self._emit({"type": "space_rebound", "space_id": new_space.space_id,
                    "version": new_space.version})

    # -- the iteration -----------------------------------------------------------

    def _harvest_late(self) -> list[Observation]:
        """Collect late results of previously timed-out tasks (never re-awaited)."""
        ready = []
        for task_id in sorted(self.awaiting_late):
            try:
                task = self.broker.get(task_id)
            except Exception:
                # a resumed controller has a fresh broker; orphans died with it
                self.awaiting_late.discard(task_id)
                continue
            if task.state is TaskState.COMPLETED:
                ready.append(self._to_observation(task))
                self.awaiting_late.discard(task_id)
            elif task.state is TaskState.FAILED:
                self.awaiting_late.discard(task_id)
        return ready

    def _to_observation(self, task: Task) -> Observation:
        record = task.result
        scalar = combine_reward(record, self.objective)
        return Observation(task_id=task.task_id, config=task.config,
                           fidelity=task.fidelity.resource,
                           loss=loss_of(scalar, self.objective), reward=scalar,
                           metrics=dict(record.train_metrics) | dict(record.deploy_metrics))

    def run_iteration(self) -> IterationLedger:
        """Generate, publish, wait semisynchronously, ingest, checkpoint."""
        remaining = self.max_evaluations - self.observation_count()
        batch = max(0, min(self.batch_size, remaining))
        try:
            proposals = self.strategy.generate_tasks(batch) if batch else []
        except Exception as exc:
            self.status = "FAILED"
            self._emit({"type": "job_status", "status": "FAILED",
                        "diagnostic": f"strategy error: {exc}"})
            raise EstimatorError(f"strategy error: {exc}") from exc

        ledger = IterationLedger(index=self.iteration, batch_started_at=self.clock.now())
        try:
            issued = []
            for proposal in proposals:
                task = self.broker.publish(self.job_id, proposal.config, proposal.fidelity,
                                           iteration=self.iteration)
                issued.append((task.task_id, proposal))
                ledger.issued.append(task.task_id)
        except Exception as exc:
            raise RetryableIterationError(f"broker publish failed: {exc}") from exc
        self.strategy.notify_issued(issued)
        if not proposals and self.awaiting_late:
            self._wait_for_late()

        resource = proposals[0].fidelity.resource if proposals else 1.0
        ledger.timeout_budget = adaptive_timeout(self.stats, self.k, self.t_min,
                                                 self.t_max, resource)
        self._wait(ledger)
        self._close_iteration(ledger)
        return ledger

    def _wait(self, ledger: IterationLedger) -> None:
        """Park until work starts, then wait for resolution or the deadline."""
        outstanding = set(ledger.issued)
        while True:
            self.broker.sweep_leases()
            for task_id in sorted(outstanding):
                task = self.broker.get(task_id)
                if task.state is TaskState.COMPLETED:
                    ledger.completed.add(task_id)
                elif task.state is TaskState.FAILED:
                    ledger.failed.add(task_id)
            outstanding -= ledger.completed | ledger.failed
            if not outstanding:
                return
            now = self.clock.now()
            if ledger.adaptive_deadline is None:
                if self._batch_started(ledger.issued):
                    ledger.adaptive_deadline = now + ledger.timeout_budget
                    ledger.batch_started_at = min(ledger.batch_started_at, now)
            if ledger.adaptive_deadline is not None and now >= ledger.adaptive_deadline:
                for task_id in sorted(outstanding):
                    self.broker.mark_timeout(task_id)
                    ledger.timed_out.add(task_id)
                    self.awaiting_late.add(task_id)
                return
            if self._stop_requested and not any(
                    self.broker.get(t).state in (TaskState.RESERVED, TaskState.RUNNING)
                    for t in outstanding):
                # a stopping job harvests in-flight work but abandons queued tasks
                for task_id in sorted(outstanding):
                    self.broker.mark_timeout(task_id)
                    ledger.timed_out.add(task_id)
                    self.awaiting_late.add(task_id)
                return
            self.clock.sleep(self.poll_interval)

    def _batch_started(self, issued: list[int]) -> bool:
        """True once any task of the batch has been reserved or resolved."""
        for task_id in issued:
            if self.broker.get(task_id).state is not TaskState.PENDING:
                return True
        return False

    def _wait_for_late(self) -> None:
        """Nothing left to issue: wait (up to t_max) for a straggler to resolve."""
        deadline = self.clock.now() + self.t_max
        while self.clock.now() < deadline and not self._stop_requested:
            self.broker.sweep_leases()
            for task_id in sorted(self.awaiting_late):
                try:
                    if self.broker.get(task_id).resolved:
                        return
                except Exception:
                    return
            self.clock.sleep(self.poll_interval)

    def _close_iteration(self, ledger: IterationLedger) -> None:
        observations = []
        for task_id in sorted(ledger.completed):
            task = self.broker.get(task_id)
            observations.append(self._to_observation(task))
            if task.duration is not None:
                self.stats.update(task.fidelity.resource, task.duration)
        observations.extend(self._harvest_late())
        observations.sort(key=lambda o: o.task_id)
        fresh = [o for o in observations if o.task_id not in self.ingested]
        self.ingested.update(o.task_id for o in fresh)
        try:
            self.strategy.handle_rewards(fresh)
            self.strategy.handle_failures(sorted(ledger.failed | ledger.timed_out))
        except Exception as exc:
            self.status = "FAILED"
            self._emit({"type": "job_status", "status": "FAILED",
                        "diagnostic": f"strategy error: {exc}"})
            raise EstimatorError(f"strategy error: {exc}") from exc
        ledger.closed_at = self.clock.now()
        self.ledgers.append(ledger)
        self.iteration += 1
        for obs in fresh:
            self._emit({"type": "observation", **obs.to_dict()})
        self._emit({"type": "iteration_closed", "index": ledger.index,
                    "issued": ledger.issued, "completed": sorted(ledger.completed),
                    "failed": sorted(ledger.failed),
                    "timed_out": sorted(ledger.timed_out),
                    "deadline_budget": ledger.timeout_budget,
                    "closed_at": ledger.closed_at})
        self._emit({"type": "checkpoint", **self.checkpoint()})
        stuck = not ledger.issued and not fresh and not self.awaiting_late
        self._idle_rounds = self._idle_rounds + 1 if stuck else 0

    # -- the job loop ---------------------------------------------------------------

    @property
    def done(self) -> bool:
        if self.status in ("COMPLETE", "FAILED", "STOPPED"):
            return True
        budget_spent = self.observation_count() >= self.max_evaluations
        exhausted = self.strategy.finished
        return (budget_spent or exhausted) and not self.awaiting_late

    def run(self, max_iterations: int | None = None) -> None:
        self.status = "RUNNING"
        self._emit({"type": "job_status", "status": "RUNNING"})
        iterations = 0
        while not self.done:
            if self._stop_requested:
                self.status = "STOPPED"
                self._emit({"type": "job_status", "status": "STOPPED"})
                return
            self.run_iteration()
            iterations += 1
            if max_iterations is not None and iterations >= max_iterations:
                return
            if self._idle_rounds > 50:
                self.status = "FAILED"
                self._emit({"type": "job_status", "status": "FAILED",
                            "diagnostic": "no progress: nothing issued or resolved"})
                return
        self.status = "COMPLETE"
        self._emit({"type": "job_status", "status": "COMPLETE"})

    # -- checkpoint / resume -----------------------------------------------------------

    def checkpoint(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "strategy": self.strategy.state_dict(),
            "stats": self.stats.to_dict(),
            "awaiting_late": sorted(self.awaiting_late),
            "ingested": sorted(self.ingested),
            "space_version": self.space.version,
            "next_task_id": max((t.task_id for t in self.broker.tasks()), default=0) + 1,
            "best_loss": (self.best().loss if self.best() else None),
        }

    def restore(self, snapshot: Mapping[str, Any]) -> None:
        self.iteration = snapshot["iteration"]
        self.strategy.load_state_dict(snapshot["strategy"])
        self.stats = DurationStats.from_dict(snapshot["stats"])
        self.awaiting_late = set(snapshot["awaiting_late"])
        self.ingested = set(snapshot["ingested"])
