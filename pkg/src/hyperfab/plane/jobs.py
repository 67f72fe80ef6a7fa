"""Job specs, event-sourced job state, and the engine that runs searches.

Every state change is one appended record in the job's event log; ``JobState``
is a pure fold over those records, applied identically to live events and to
replay, so a restarted process reconstructs exactly what the crashed one saw.

A job runs as an in-process pipeline in its own thread: start (resolve the
space, smoke-test the evaluator with a two-task dry run) -> search loop with
its worker pool -> advisor report -> end (knowledge-base record).
"""

from __future__ import annotations

import logging
import queue
import threading
import uuid
from dataclasses import dataclass, field, replace as dc_replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..clock import Clock, REAL_CLOCK
from ..estimator import JobController
from ..fabric.broker import Broker
from ..fabric.evaluator import EvaluatorError, evaluate
from ..fabric.rewards import ObjectiveSpec
from ..fabric.worker import WorkerPool
from ..space import SearchSpace, SpaceStore, sample, space_from_doc, space_to_doc
from ..strategies import make_strategy
from .. import advisor as advisor_mod
from .formatter import KnowledgeBase, KnowledgeRecord, fingerprint_of, format_job
from .log import EventLog, replay

logger = logging.getLogger(__name__)


class JobError(Exception):
    pass


class UnknownJobError(JobError):
    pass


@dataclass(frozen=True)
class JobSpec:
    name: str
    space: Mapping[str, Any] | None = None   # inline space document
    space_ref: str | None = None             # "id" or "id@version"
    strategy: str | None = None
    strategy_params: dict[str, Any] = field(default_factory=dict)
    objective: ObjectiveSpec = field(default_factory=lambda: ObjectiveSpec("score"))
    batch_size: int | None = None
    max_evaluations: int = 20
    parallelism: int = 2
    max_resource: float = 1.0
    t_max: float = 3600.0
    t_min: float = 1.0
    k: float = 2.0
    seed: int = 0
    evaluator_cmd: Any = None                # argv list, shell string, or callable
    probe_cmd: Any = None
    fidelity_capable: bool = False
    eval_timeout: float | None = None
    lease_ttl: float = 30.0
    max_attempts: int = 3
    smoke_test: bool | None = None           # default: on for subprocess evaluators

    def validate(self) -> None:
        if self.parallelism < 1:
            raise JobError("parallelism must be at least 1")
        if self.batch_size is not None and self.max_evaluations < self.batch_size:
            raise JobError("max_evaluations must be at least the batch size")
        if self.space is None and self.space_ref is None:
            raise JobError("either an inline space or a space_ref is required")

    def replace(self, **kw) -> "JobSpec":
        return dc_replace(self, **kw)

    def to_doc(self) -> dict[str, Any]:
        doc = {
            "name": self.name,
            "strategy": self.strategy,
            "strategy_params": dict(self.strategy_params),
            "objective": self.objective.to_dict(),
            "batch_size": self.batch_size,
            "max_evaluations": self.max_evaluations,
            "parallelism": self.parallelism,
            "max_resource": self.max_resource,
            "t_max": self.t_max,
            "t_min": self.t_min,
            "k": self.k,
            "seed": self.seed,
            "fidelity_capable": self.fidelity_capable,
            "eval_timeout": self.eval_timeout,
            "lease_ttl": self.lease_ttl,
            "max_attempts": self.max_attempts,
            "smoke_test": self.smoke_test,
        }
        if self.space is not None:
            doc["space"] = dict(self.space)
        if self.space_ref is not None:
            doc["space_ref"] = self.space_ref
        if self.evaluator_cmd is not None and not callable(self.evaluator_cmd):
            doc["evaluator_cmd"] = self.evaluator_cmd
        if self.probe_cmd is not None and not callable(self.probe_cmd):
            doc["probe_cmd"] = self.probe_cmd
        return doc

    @staticmethod
    def from_doc(doc: Mapping[str, Any]) -> "JobSpec":
        known = {
            "name", "space", "space_ref", "strategy", "strategy_params", "objective",
            "batch_size", "max_evaluations", "parallelism", "max_resource", "t_max",
            "t_min", "k", "seed", "evaluator_cmd", "probe_cmd", "fidelity_capable",
            "eval_timeout", "lease_ttl", "max_attempts", "smoke_test",
        }
        unknown = set(doc) - known
        if unknown:
            raise JobError(f"unknown JobSpec fields {sorted(unknown)}")
        kwargs = {k: v for k, v in doc.items() if k in known and k != "objective"}
        if "objective" in doc:
            kwargs["objective"] = ObjectiveSpec.from_dict(doc["objective"])
        spec = JobSpec(**kwargs)
        spec.validate()
        return spec

    @staticmethod
    def from_text(text: str) -> "JobSpec":
        return JobSpec.from_doc(yaml.safe_load(text))


# ---------------------------------------------------------------------------
# event-sourced job state


@dataclass
class JobState:
    job_id: str
    spec_doc: dict[str, Any] = field(default_factory=dict)
    status: str = "PENDING"
    diagnostic: str | None = None
    iteration: int = 0
    space_id: str | None = None
    space_version: int | None = None
    tasks: dict[int, dict[str, Any]] = field(default_factory=dict)
    observations: list[dict[str, Any]] = field(default_factory=list)
    best: dict[str, Any] | None = None
    last_checkpoint: dict[str, Any] | None = None
    events_applied: int = 0

    def summary(self) -> dict[str, Any]:
        by_state: dict[str, int] = {}
        for task in self.tasks.values():
            by_state[task["state"]] = by_state.get(task["state"], 0) + 1
        return {
            "job_id": self.job_id,
            "name": self.spec_doc.get("name"),
            "status": self.status,
            "diagnostic": self.diagnostic,
            "iteration": self.iteration,
            "space_id": self.space_id,
            "space_version": self.space_version,
            "tasks": by_state,
            "n_observations": len(self.observations),
            "best": self.best,
        }


def apply_event(state: JobState, event: Mapping[str, Any]) -> JobState:
    """The reducer shared by live updates and replay."""
    kind = event.get("type")
    if kind == "job_submitted":
        state.spec_doc = dict(event.get("spec", {}))
        state.space_id = event.get("space_id")
        state.space_version = event.get("space_version")
    elif kind == "task_published":
        state.tasks[event["task_id"]] = {
            "task_id": event["task_id"],
            "state": "PENDING",
            "iteration": event.get("iteration", 0),
            "config": dict(event.get("config", {})),
            "space_version": event.get("space_version"),
            "fidelity": event.get("fidelity"),
            "attempts": 1,
            "scalar_reward": None,
            "duration_s": None,
            "timed_out": False,
        }
    elif kind == "task_reserved":
        task = state.tasks.get(event["task_id"])
        if task is not None:
            task["state"] = "RUNNING"
            task["worker_id"] = event.get("worker_id")
            task["attempts"] = event.get("attempt", task["attempts"])
    elif kind == "task_requeued":
        task = state.tasks.get(event["task_id"])
        if task is not None:
            task["state"] = "PENDING"
            task["attempts"] = event.get("attempt", task["attempts"])
    elif kind == "task_completed":
        task = state.tasks.get(event["task_id"])
        if task is not None:
            task["state"] = "COMPLETED"
            task["duration_s"] = event.get("duration")
    elif kind == "task_failed":
        task = state.tasks.get(event["task_id"])
        if task is not None:
            task["state"] = "FAILED"
            task["failure"] = event.get("failure")
            task["duration_s"] = event.get("duration")
    elif kind == "task_timeout":
        task = state.tasks.get(event["task_id"])
        if task is not None:
            task["timed_out"] = True
    elif kind == "observation":
        obs = {k: event[k] for k in ("task_id", "config", "space_id", "space_version",
                                     "fidelity", "loss", "reward", "metrics")}
        state.observations.append(obs)
        task = state.tasks.get(event["task_id"])
        if task is not None:
            task["scalar_reward"] = event["reward"]
        if state.best is None or (event["loss"], event["task_id"]) < \
                (state.best["loss"], state.best["task_id"]):
            state.best = {"task_id": event["task_id"], "loss": event["loss"],
                          "reward": event["reward"], "config": dict(event["config"])}
    elif kind == "iteration_closed":
        state.iteration = event["index"] + 1
    elif kind == "checkpoint":
        state.last_checkpoint = dict(event)
    elif kind == "space_rebound":
        state.space_version = event.get("version")
    elif kind == "job_status":
        state.status = event["status"]
        if event.get("diagnostic"):
            state.diagnostic = event["diagnostic"]
    state.events_applied += 1
    return state


def replay_job(job_id: str, log_path: Path) -> JobState:
    state = JobState(job_id=job_id)
    for event in replay(log_path):
        apply_event(state, event)
    return state


# ---------------------------------------------------------------------------
# engine


@dataclass
class JobHandle:
    job_id: str
    state: JobState
    log: EventLog
    lock: threading.Lock = field(default_factory=threading.Lock)
    subscribers: list["queue.Queue[tuple[int, dict]]"] = field(default_factory=list)
    controller: JobController | None = None
    pool: WorkerPool | None = None
    thread: threading.Thread | None = None
    spec: JobSpec | None = None
    stop_requested: bool = False


class Engine:
    """Owns the data directory: spaces, jobs, knowledge, event logs."""

    def __init__(self, data_dir: str | Path, clock: Clock = REAL_CLOCK) -> None:
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self.spaces = SpaceStore()
        self._spaces_log = EventLog(self.data_dir / "spaces.log")
        self.knowledge = KnowledgeBase(self.data_dir / "knowledge.log")
        self._registry_log = EventLog(self.data_dir / "registry.log")
        self._idempotency: dict[str, str] = {}
        self._jobs: dict[str, JobHandle] = {}
        self._lock = threading.Lock()
        self._load()

    # -- persistence bootstrap ---------------------------------------------------

    def _load(self) -> None:
        for event in replay(self.data_dir / "spaces.log"):
            if event.get("type") == "space_version":
                space = space_from_doc(event["doc"], space_id=event["space_id"],
                                       version=event["version"],
                                       parent_version=event.get("parent_version"),
                                       note=event.get("note", ""))
                self.spaces.add(space)
        for event in replay(self.data_dir / "registry.log"):
            if event.get("type") == "job_registered":
                if event.get("idempotency_key"):
                    self._idempotency[event["idempotency_key"]] = event["job_id"]
        jobs_dir = self.data_dir / "jobs"
        if jobs_dir.exists():
            for job_dir in sorted(jobs_dir.iterdir()):
                log_path = job_dir / "events.log"
                if log_path.exists():
                    state = replay_job(job_dir.name, log_path)
                    self._jobs[job_dir.name] = JobHandle(
                        job_id=job_dir.name, state=state, log=EventLog(log_path))

    # -- spaces --------------------------------------------------------------------

    def create_space(self, document: str | Mapping[str, Any], space_id: str,
                     note: str = "") -> SearchSpace:
        space = self.spaces.create(document, space_id=space_id, note=note)
        self._spaces_log.append({"type": "space_version", "space_id": space.space_id,
                                 "version": space.version, "parent_version": None,
                                 "doc": space_to_doc(space), "note": note})
        return space

    def new_space_version(self, space_id: str, edits: Any, note: str = "") -> SearchSpace:
        space = self.spaces.new_version(space_id, edits, note=note)
        self._spaces_log.append({"type": "space_version", "space_id": space.space_id,
                                 "version": space.version,
                                 "parent_version": space.parent_version,
                                 "doc": space_to_doc(space), "note": note})
        return space

    def resolve_space(self, spec: JobSpec, job_id: str) -> SearchSpace:
        if spec.space is not None:
            return self.create_space(spec.space, space_id=f"{job_id}-space",
                                     note=f"inline space of job {job_id}")
        ref = spec.space_ref or ""
        space_id, _, version = ref.partition("@")
        try:
            return self.spaces.get(space_id, int(version) if version else None)
        except KeyError:
            raise JobError(f"unresolvable space reference {ref!r}") from None

    # -- jobs -------------------------------------------------------------------------

    def _handle(self, job_id: str) -> JobHandle:
        handle = self._jobs.get(job_id)
        if handle is None:
            raise UnknownJobError(f"unknown job {job_id!r}")
        return handle

    def _publish(self, handle: JobHandle, event: dict[str, Any]) -> None:
        with handle.lock:
            seq = handle.log.append(event)
            apply_event(handle.state, event)
            for q in list(handle.subscribers):
                q.put((seq, event))

    def subscribe(self, job_id: str, last_event_id: int = -1
                  ) -> tuple[list[tuple[int, dict]], "queue.Queue[tuple[int, dict]]"]:
        """History after ``last_event_id`` plus a live queue, atomically."""
        handle = self._handle(job_id)
        with handle.lock:
            history = [(seq, event) for seq, event in
                       enumerate(replay(handle.log.path)) if seq > last_event_id]
            live: "queue.Queue[tuple[int, dict]]" = queue.Queue()
            handle.subscribers.append(live)
        return history, live

    def unsubscribe(self, job_id: str, live: "queue.Queue") -> None:
        handle = self._handle(job_id)
        with handle.lock:
            if live in handle.subscribers:
                handle.subscribers.remove(live)

    def submit(self, spec: JobSpec | Mapping[str, Any],
               idempotency_key: str | None = None, wait: bool = False) -> str:
        if not isinstance(spec, JobSpec):
            spec = JobSpec.from_doc(spec)
        spec.validate()
        with self._lock:
            if idempotency_key and idempotency_key in self._idempotency:
                return self._idempotency[idempotency_key]
            job_id = uuid.uuid4().hex[:12]
            job_dir = self.data_dir / "jobs" / job_id
            job_dir.mkdir(parents=True, exist_ok=True)
            handle = JobHandle(job_id=job_id, state=JobState(job_id=job_id),
                               log=EventLog(job_dir / "events.log"), spec=spec)
            self._jobs[job_id] = handle
            self._registry_log.append({"type": "job_registered", "job_id": job_id,
                                       "idempotency_key": idempotency_key,
                                       "name": spec.name})
            if idempotency_key:
                self._idempotency[idempotency_key] = job_id

        space = self.resolve_space(spec, job_id)
        spec, _ = format_job(spec, space, self.knowledge)
        handle.spec = spec
        self._publish(handle, {"type": "job_submitted", "spec": spec.to_doc(),
                               "space_id": space.space_id,
                               "space_version": space.version})
        runner = _JobRunner(self, handle, spec, space)
        handle.thread = threading.Thread(target=runner.run, name=f"job-{job_id}",
                                         daemon=True)
        handle.thread.start()
        if wait:
            handle.thread.join()
        return job_id

    def wait(self, job_id: str, timeout: float | None = None) -> JobState:
        handle = self._handle(job_id)
        if handle.thread is not None:
            handle.thread.join(timeout)
        return handle.state

    def resume(self, job_id: str, wait: bool = False, evaluator: Any = None) -> JobState:
        """Continue an interrupted job from its last checkpoint (no-op if done).

        ``evaluator`` re-supplies an in-process callable evaluator, which
        cannot be reconstructed from the persisted spec document.
        """
        handle = self._handle(job_id)
        if handle.thread is not None and handle.thread.is_alive():
            return handle.state
        if handle.state.status in ("COMPLETE", "FAILED", "STOPPED"):
            return handle.state
        spec = JobSpec.from_doc(handle.state.spec_doc)
        if evaluator is not None:
            spec = spec.replace(evaluator_cmd=evaluator)
        handle.spec = spec
        space = self.spaces.get(handle.state.space_id, handle.state.space_version)
        runner = _JobRunner(self, handle, spec, space,
                            checkpoint=handle.state.last_checkpoint)
        handle.thread = threading.Thread(target=runner.run, name=f"job-{job_id}",
                                         daemon=True)
        handle.thread.start()
        if wait:
            handle.thread.join()
        return handle.state

    def status(self, job_id: str) -> JobState:
        return self._handle(job_id).state

    def list_jobs(self) -> list[dict[str, Any]]:
        return [h.state.summary() for h in self._jobs.values()]

    def candidates(self, job_id: str, state_filter: str | None = None,
                   limit: int | None = None) -> list[dict[str, Any]]:
        state = self._handle(job_id).state
        rows = [dict(t) for t in state.tasks.values()]
        if state_filter:
            rows = [r for r in rows if r["state"] == state_filter.upper()]
        rows.sort(key=lambda r: r["task_id"])
        return rows[:limit] if limit else rows

    def stop(self, job_id: str) -> JobState:
        handle = self._handle(job_id)
        if handle.state.status in ("COMPLETE", "FAILED", "STOPPED"):
            raise JobError(f"job {job_id} already {handle.state.status}")
        handle.stop_requested = True
        if handle.controller is not None:
            handle.controller.stop()
        return handle.state

    def apply_space_edit(self, job_id: str, version: int) -> JobState:
        handle = self._handle(job_id)
        if handle.controller is None:
            raise JobError(f"job {job_id} is not running")
        space = self.spaces.get(handle.state.space_id, version)
        handle.controller.apply_space_edit(space)
        return handle.state

    # -- analytics ---------------------------------------------------------------------

    def _observations(self, job_id: str):
        from ..strategies.base import Observation

        state = self._handle(job_id).state
        return [Observation.from_dict(o) for o in state.observations]

    def _job_space(self, job_id: str) -> SearchSpace:
        state = self._handle(job_id).state
        return self.spaces.get(state.space_id, state.space_version)

    def importance(self, job_id: str) -> dict[str, Any]:
        report = advisor_mod.importance(self._observations(job_id), self._job_space(job_id))
        return report.to_dict()

    def projection(self, job_id: str) -> list[dict[str, float]]:
        points = advisor_mod.project_2d(self._observations(job_id), self._job_space(job_id))
        obs = self._handle(job_id).state.observations
        return [{"x": x, "y": y, "reward": reward, "task_id": obs[i]["task_id"]}
                for i, (x, y, reward) in enumerate(points)]

    def suggestion(self, job_id: str, q: float = 0.2) -> dict[str, Any]:
        suggestion = advisor_mod.suggest_space(self._observations(job_id),
                                               self._job_space(job_id), q=q)
        return suggestion.to_dict()

    def space_diff(self, space_id: str, v_from: int, v_to: int) -> list[dict[str, Any]]:
        from ..space import diff_spaces

        return diff_spaces(self.spaces.get(space_id, v_from),
                           self.spaces.get(space_id, v_to)).to_list()


class _JobRunner:
    """The in-process pipeline: start -> search -> advisor -> end."""

    def __init__(self, engine: Engine, handle: JobHandle, spec: JobSpec,
                 space: SearchSpace, checkpoint: Mapping[str, Any] | None = None) -> None:
        self.engine = engine
        self.handle = handle
        self.spec = spec
        self.space = space
        self.checkpoint = checkpoint

    def _emit(self, event: dict[str, Any]) -> None:
        self.engine._publish(self.handle, event)

    def _smoke_test(self) -> None:
        """Two-task dry run validating the evaluator protocol before searching."""
        artifact_dir = self.engine.data_dir / "jobs" / self.handle.job_id / "artifacts"
        artifact_dir.mkdir(parents=True, exist_ok=True)
        from ..fabric.broker import Task as BrokerTask
        from ..strategies.base import FidelityBudget

        for i in range(2):
            config = sample(self.space, seed=int(1e9) + self.spec.seed * 2 + i)
            probe_task = BrokerTask(task_id=-(i + 1), job_id=self.handle.job_id,
                                    config=config,
                                    fidelity=FidelityBudget(self.spec.max_resource, False))
            record = evaluate(self.spec.evaluator_cmd, probe_task,
                              artifact_dir=str(artifact_dir),
                              timeout=self.spec.eval_timeout)
            if self.spec.objective.objective not in record.train_metrics:
                raise EvaluatorError(
                    f"objective metric {self.spec.objective.objective!r} missing "
                    f"from evaluator output {sorted(record.train_metrics)}")
        self._emit({"type": "smoke_test", "status": "passed", "tasks": 2})

    def run(self) -> None:
        spec, handle = self.spec, self.handle
        try:
            if spec.evaluator_cmd is None:
                raise JobError("no evaluator configured")
            smoke = spec.smoke_test
            if smoke is None:
                smoke = not callable(spec.evaluator_cmd)
            if smoke and not callable(spec.evaluator_cmd):
                self._smoke_test()

            next_task_id = 1
            if self.checkpoint:
                next_task_id = self.checkpoint.get("next_task_id", 1)
            broker = Broker(clock=self.engine.clock, lease_ttl=spec.lease_ttl,
                            max_attempts=spec.max_attempts, on_event=self._emit,
                            next_task_id=next_task_id)
            strategy = make_strategy(spec.strategy or "random", seed=spec.seed,
                                     max_resource=spec.max_resource,
                                     params=spec.strategy_params)
            artifact_dir = self.engine.data_dir / "jobs" / handle.job_id / "artifacts"
            artifact_dir.mkdir(parents=True, exist_ok=True)
            pool = WorkerPool(broker, spec.evaluator_cmd, n_workers=spec.parallelism,
                              clock=self.engine.clock, lease_ttl=spec.lease_ttl,
                              probe_cmd=spec.probe_cmd, artifact_dir=str(artifact_dir),
                              eval_timeout=spec.eval_timeout)
            controller = JobController(
                job_id=handle.job_id, space=self.space, strategy=strategy,
                broker=broker, objective=spec.objective,
                batch_size=spec.batch_size or spec.parallelism,
                max_evaluations=spec.max_evaluations, clock=self.engine.clock,
                k=spec.k, t_min=spec.t_min, t_max=spec.t_max,
                space_store=self.engine.spaces, on_event=self._emit)
            if self.checkpoint:
                controller.restore({k: self.checkpoint[k] for k in
                                    ("iteration", "strategy", "stats",
                                     "awaiting_late", "ingested")})
            handle.controller = controller
            handle.pool = pool
            if handle.stop_requested:  # stop arrived before the loop started
                controller.stop()
            pool.start()
            try:
                controller.run()
            finally:
                pool.stop()
            self._advisor_stage(controller)
            self._end_stage(controller)
        except Exception as exc:
            logger.exception("job %s failed", handle.job_id)
            if handle.state.status not in ("FAILED",):
                self._emit({"type": "job_status", "status": "FAILED",
                            "diagnostic": str(exc)})
        finally:
            handle.controller = None
            handle.pool = None

    def _advisor_stage(self, controller: JobController) -> None:
        observations = controller.strategy.observations
        report: dict[str, Any] = {"type": "advisor_report"}
        try:
            if len(observations) >= advisor_mod.MIN_OBSERVATIONS:
                report["importance"] = advisor_mod.importance(
                    observations, controller.space).to_dict()
                report["suggestion"] = advisor_mod.suggest_space(
                    observations, controller.space).to_dict()
            if len(observations) >= 2:
                points = advisor_mod.project_2d(observations, controller.space)
                report["projection"] = [
                    {"x": x, "y": y, "reward": r} for x, y, r in points]
        except Exception as exc:
            report["error"] = str(exc)
        if len(report) > 1:
            self._emit(report)

    def _end_stage(self, controller: JobController) -> None:
        if controller.status != "COMPLETE":
            return
        durations = [task.duration for task in controller.broker.tasks()
                     if task.duration is not None]
        best = controller.best()
        kind = self.spec.objective.direction + (
            "+constrained" if self.spec.objective.constraints else "")
        self.engine.knowledge.append(KnowledgeRecord(
            fingerprint=fingerprint_of(self.space, kind),
            strategy=self.spec.strategy or "random",
            best_reward=best.reward if best else None,
            evaluations=controller.observation_count(),
            mean_task_duration=sum(durations) / len(durations) if durations else None))
