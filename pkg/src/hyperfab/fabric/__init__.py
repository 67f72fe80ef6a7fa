"""Lease-based task fabric: broker, workers, evaluator protocol, rewards."""

from __future__ import annotations

from .broker import (Broker, BrokerError, Lease, Task, TaskState, UnknownTaskError,
                     DEFAULT_LEASE_TTL, DEFAULT_MAX_ATTEMPTS)
from .evaluator import EvaluatorError, deploy_probe, evaluate, task_payload
from .rewards import (Constraint, ObjectiveSpec, RewardError, RewardRecord,
                      combine_reward, loss_of, pareto_front)
from .worker import Worker, WorkerPool

__all__ = [
    "Broker",
    "BrokerError",
    "Constraint",
    "DEFAULT_LEASE_TTL",
    "DEFAULT_MAX_ATTEMPTS",
    "EvaluatorError",
    "Lease",
    "ObjectiveSpec",
    "RewardError",
    "RewardRecord",
    "Task",
    "TaskState",
    "UnknownTaskError",
    "Worker",
    "WorkerPool",
    "combine_reward",
    "deploy_probe",
    "evaluate",
    "loss_of",
    "pareto_front",
    "task_payload",
]
