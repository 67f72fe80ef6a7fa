"""Job formatter: fill unset strategy/batch from space shape and history.

Strategy rules, in order: an enumerable space of at most 500 points gets the
forest surrogate; a space with continuous dimensions and at most 20 total
dims gets the GP; a fidelity-capable evaluator gets hyperband; anything else
gets evolution. Duration estimates come from the nearest knowledge-base
fingerprint (space size, dim count, objective kind) and fall back to unknown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from ..space import SearchSpace, space_layout, space_size
from .log import EventLog, replay

ENUMERABLE_LIMIT = 500
GP_DIM_LIMIT = 20


@dataclass(frozen=True)
class JobFingerprint:
    space_points: int  # -1 when not enumerable
    dim_count: int
    objective_kind: str  # e.g. "maximize" / "maximize+constrained"

    def to_dict(self) -> dict[str, Any]:
        return {"space_points": self.space_points, "dim_count": self.dim_count,
                "objective_kind": self.objective_kind}


@dataclass(frozen=True)
class KnowledgeRecord:
    fingerprint: JobFingerprint
    strategy: str
    best_reward: float | None
    evaluations: int
    mean_task_duration: float | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "fingerprint": self.fingerprint.to_dict(),
            "strategy": self.strategy,
            "best_reward": self.best_reward,
            "evaluations": self.evaluations,
            "mean_task_duration": self.mean_task_duration,
        }

    @staticmethod
    def from_dict(raw: Mapping[str, Any]) -> "KnowledgeRecord":
        fp = raw["fingerprint"]
        return KnowledgeRecord(
            fingerprint=JobFingerprint(space_points=fp["space_points"],
                                       dim_count=fp["dim_count"],
                                       objective_kind=fp["objective_kind"]),
            strategy=raw["strategy"], best_reward=raw.get("best_reward"),
            evaluations=raw.get("evaluations", 0),
            mean_task_duration=raw.get("mean_task_duration"))


class KnowledgeBase:
    """Append-only history of finished searches, persisted like everything else."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.records: list[KnowledgeRecord] = []
        self._log: EventLog | None = None
        if path is not None:
            for raw in replay(path):
                if raw.get("type") == "knowledge":
                    self.records.append(KnowledgeRecord.from_dict(raw))
            self._log = EventLog(path)

    def append(self, record: KnowledgeRecord) -> None:
        self.records.append(record)
        if self._log is not None:
            self._log.append({"type": "knowledge", **record.to_dict()})

    def nearest(self, fingerprint: JobFingerprint) -> KnowledgeRecord | None:
        def distance(record: KnowledgeRecord) -> float:
            other = record.fingerprint
            size_a = math.log10(fingerprint.space_points + 2) if fingerprint.space_points >= 0 else 9.0
            size_b = math.log10(other.space_points + 2) if other.space_points >= 0 else 9.0
            kind_penalty = 0.0 if other.objective_kind == fingerprint.objective_kind else 1.0
            return abs(size_a - size_b) + abs(other.dim_count - fingerprint.dim_count) / 10.0 \
                + kind_penalty

        if not self.records:
            return None
        return min(self.records, key=distance)


def fingerprint_of(space: SearchSpace, objective_kind: str) -> JobFingerprint:
    points = space_size(space, cap=100_000)
    return JobFingerprint(space_points=points if points is not None else -1,
                          dim_count=len(space_layout(space)),
                          objective_kind=objective_kind)


def choose_strategy(space: SearchSpace, fidelity_capable: bool) -> tuple[str, dict[str, Any]]:
    points = space_size(space, cap=ENUMERABLE_LIMIT)
    if points is not None and points <= ENUMERABLE_LIMIT:
        return "bo", {"surrogate": "forest"}
    layout = space_layout(space)
    if any(dim.kind == "float" for dim in layout) and len(layout) <= GP_DIM_LIMIT:
        return "bo", {"surrogate": "gp"}
    if fidelity_capable:
        return "hyperband", {}
    return "evolution", {}


def format_job(spec: "JobSpec", space: SearchSpace,
               knowledge: KnowledgeBase) -> tuple["JobSpec", float | None]:
    """Complete a partial JobSpec; a pure function of (spec, knowledge snapshot).

    Returns the completed spec and an estimated mean task duration (None when
    the knowledge base has nothing close).
    """
    from .jobs import JobSpec  # circular at import time only

    assert isinstance(spec, JobSpec)
    updates: dict[str, Any] = {}
    if spec.strategy is None:
        strategy, params = choose_strategy(space, spec.fidelity_capable)
        updates["strategy"] = strategy
        updates["strategy_params"] = {**params, **spec.strategy_params}
    if spec.batch_size is None:
        updates["batch_size"] = spec.parallelism
    completed = spec.replace(**updates) if updates else spec

    kind = completed.objective.direction + (
        "+constrained" if completed.objective.constraints else "")
    record = knowledge.nearest(fingerprint_of(space, kind))
    return completed, (record.mean_task_duration if record else None)
