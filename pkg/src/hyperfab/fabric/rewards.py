"""Reward records, multiobjective scalarization and Pareto reporting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence


class RewardError(Exception):
    pass


@dataclass
class RewardRecord:
    """Raw evaluation output: training metrics plus optional deployment probes."""

    train_metrics: dict[str, float]
    deploy_metrics: dict[str, float] = field(default_factory=dict)
    scalar_reward: float | None = None  # filled by combine_reward
    evaluator_log_ref: str = ""
    artifact: str | None = None
    probe_failed: bool = False

    def metric(self, name: str) -> float | None:
        if name in self.train_metrics:
            return self.train_metrics[name]
        return self.deploy_metrics.get(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "train_metrics": dict(self.train_metrics),
            "deploy_metrics": dict(self.deploy_metrics),
            "scalar_reward": self.scalar_reward,
            "evaluator_log_ref": self.evaluator_log_ref,
            "artifact": self.artifact,
            "probe_failed": self.probe_failed,
        }

    @staticmethod
    def from_dict(raw: Mapping[str, Any]) -> "RewardRecord":
        return RewardRecord(
            train_metrics=dict(raw.get("train_metrics", {})),
            deploy_metrics=dict(raw.get("deploy_metrics", {})),
            scalar_reward=raw.get("scalar_reward"),
            evaluator_log_ref=raw.get("evaluator_log_ref", ""),
            artifact=raw.get("artifact"),
            probe_failed=raw.get("probe_failed", False),
        )


@dataclass(frozen=True)
class Constraint:
    metric: str
    limit: float
    weight: float = 1.0  # penalty weight (lambda)

    def __post_init__(self) -> None:
        if self.limit <= 0:
            raise RewardError(f"constraint limit must be positive, got {self.limit}")
        if self.weight < 0:
            raise RewardError(f"constraint weight must be non-negative, got {self.weight}")


@dataclass(frozen=True)
class ObjectiveSpec:
    objective: str
    direction: str = "maximize"  # maximize | minimize
    constraints: tuple[Constraint, ...] = ()
    mode: str = "penalty"  # penalty | weighted-sum

    def __post_init__(self) -> None:
        if self.direction not in ("maximize", "minimize"):
            raise RewardError(f"unknown direction {self.direction!r}")
        if self.mode not in ("penalty", "weighted-sum"):
            raise RewardError(f"unknown mode {self.mode!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.objective,
            "direction": self.direction,
            "mode": self.mode,
            "constraints": [
                {"metric": c.metric, "limit": c.limit, "weight": c.weight}
                for c in self.constraints
            ],
        }

    @staticmethod
    def from_dict(raw: Mapping[str, Any]) -> "ObjectiveSpec":
        return ObjectiveSpec(
            objective=raw.get("key") or raw.get("objective") or "score",
            direction=raw.get("direction", "maximize"),
            constraints=tuple(
                Constraint(metric=c["metric"], limit=c["limit"], weight=c.get("weight", 1.0))
                for c in raw.get("constraints", ())),
            mode=raw.get("mode", "penalty"),
        )


def _constrained_value(record: RewardRecord, constraint: Constraint) -> float:
    """A missing constrained metric counts as a violation at twice its limit."""
    value = record.metric(constraint.metric)
    if value is None:
        return 2.0 * constraint.limit
    return value


def combine_reward(record: RewardRecord, spec: ObjectiveSpec) -> float:
    """Collapse train and deploy metrics into one scalar in the user direction."""
    objective = record.metric(spec.objective)
    if objective is None:
        raise RewardError(f"objective metric {spec.objective!r} missing from record")
    sign = 1.0 if spec.direction == "maximize" else -1.0
    if spec.mode == "penalty":
        penalty = sum(
            c.weight * max(0.0, (_constrained_value(record, c) - c.limit) / c.limit)
            for c in spec.constraints)
    else:  # weighted-sum: limit-normalized metrics, linear trade-off
        penalty = sum(
            c.weight * _constrained_value(record, c) / c.limit for c in spec.constraints)
    scalar = objective - sign * penalty
    record.scalar_reward = scalar
    return scalar


def loss_of(scalar_reward: float, spec: ObjectiveSpec) -> float:
    """Canonical minimization value: maximization rewards are negated."""
    return -scalar_reward if spec.direction == "maximize" else scalar_reward


def pareto_front(records: Sequence[RewardRecord], spec: ObjectiveSpec) -> list[RewardRecord]:
    """Non-dominated subset over (objective, constrained metrics).

    The objective follows its direction; constrained metrics are minimized.
    Duplicate points are all kept.
    """
    sign = -1.0 if spec.direction == "maximize" else 1.0

    def key(record: RewardRecord) -> list[float]:
        objective = record.metric(spec.objective)
        if objective is None:
            raise RewardError(f"objective metric {spec.objective!r} missing from record")
        return [sign * objective] + [_constrained_value(record, c) for c in spec.constraints]

    keys = [key(r) for r in records]

    def dominates(a: list[float], b: list[float]) -> bool:
        return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))

    return [r for i, r in enumerate(records)
            if not any(dominates(keys[j], keys[i]) for j in range(len(records)) if j != i)]
