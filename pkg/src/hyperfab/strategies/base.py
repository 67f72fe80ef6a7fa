"""Search-strategy contract shared by random, hyperband, evolution and BO.

A strategy binds a search space, proposes (configuration, fidelity) pairs and
ingests rewards. The controller assigns task ids at publish time and echoes
them back through :meth:`SearchStrategy.notify_issued`; resolution without a
reward (failure or timeout) arrives via :meth:`SearchStrategy.handle_failures`
so budget-laddering strategies can close their rounds.

Rewards are canonicalized to minimization: maximization objectives are negated
at ingestion, before a strategy ever sees them.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ..space import Configuration, SearchSpace


@dataclass(frozen=True)
class FidelityBudget:
    """Partial-training resource (epochs, samples, ...) a task is evaluated at."""

    resource: float
    is_final: bool = True


@dataclass(frozen=True)
class Observation:
    """One evaluated task, as consumed by strategies and the advisor."""

    task_id: int
    config: Configuration
    fidelity: float
    loss: float    # canonical minimization value
    reward: float  # user-direction scalar, for display and reports
    metrics: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "config": dict(self.config.assignments),
            "space_id": self.config.space_id,
            "space_version": self.config.space_version,
            "fidelity": self.fidelity,
            "loss": self.loss,
            "reward": self.reward,
            "metrics": dict(self.metrics),
        }

    @staticmethod
    def from_dict(raw: Mapping[str, Any]) -> "Observation":
        return Observation(
            task_id=raw["task_id"],
            config=Configuration(assignments=dict(raw["config"]), space_id=raw["space_id"],
                                 space_version=raw["space_version"]),
            fidelity=raw["fidelity"],
            loss=raw["loss"],
            reward=raw["reward"],
            metrics=dict(raw.get("metrics", {})),
        )


@dataclass(frozen=True)
class ProposedTask:
    config: Configuration
    fidelity: FidelityBudget


class StrategyError(Exception):
    pass


class SearchStrategy(ABC):
    """Base class: bind a space, generate tasks, handle rewards."""

    name = "base"

    def __init__(self, seed: int = 0, max_resource: float = 1.0) -> None:
        self.search_space: SearchSpace | None = None
        self.observations: list[Observation] = []
        self.seed = seed
        self.max_resource = max_resource
        self._calls = 0
        self._issued: set[int] = set()
        self._rewarded: set[int] = set()

    def bind_space(self, search_space: SearchSpace) -> None:
        """Bind (or rebind, after a space edit) the space proposals draw from."""
        if self.search_space is not None and self.search_space.space_id != search_space.space_id:
            raise StrategyError(
                f"cannot rebind from space {self.search_space.space_id!r} "
                f"to {search_space.space_id!r}")
        self.search_space = search_space

    def _require_space(self) -> SearchSpace:
        if self.search_space is None:
            raise StrategyError("no search space bound")
        return self.search_space

    def _next_rng(self) -> np.random.Generator:
        """Per-call generator; the call counter is checkpointed for replay."""
        rng = np.random.default_rng([self.seed, self._calls])
        self._calls += 1
        return rng

    @abstractmethod
    def generate_tasks(self, batch: int) -> list[ProposedTask]:
        """Propose at most ``batch`` tasks, deterministically given state and seed."""

    def notify_issued(self, issued: list[tuple[int, ProposedTask]]) -> None:
        """Record broker-assigned ids for proposals from the last generate call."""
        for task_id, _ in issued:
            self._issued.add(task_id)

    def handle_rewards(self, rewards: list[Observation]) -> None:
        """Append observations and advance strategy-specific state."""
        for obs in rewards:
            if obs.task_id not in self._issued:
                raise StrategyError(f"unknown task id {obs.task_id}")
            if obs.task_id in self._rewarded:
                raise StrategyError(f"duplicate reward for task {obs.task_id}")
            self._rewarded.add(obs.task_id)
            self.observations.append(obs)
        self._ingest(rewards)

    def handle_failures(self, task_ids: list[int]) -> None:
        """Note tasks that resolved without a reward (failed or timed out)."""

    def _ingest(self, rewards: list[Observation]) -> None:
        """Strategy-specific reaction to new observations."""

    @property
    def finished(self) -> bool:
        """True once the strategy has nothing left to propose."""
        return False

    # -- checkpointing ------------------------------------------------------

    def state_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "seed": self.seed,
            "calls": self._calls,
            "issued": sorted(self._issued),
            "rewarded": sorted(self._rewarded),
            "observations": [o.to_dict() for o in self.observations],
            "payload": self._payload_dict(),
        }

    def load_state_dict(self, state: Mapping[str, Any]) -> None:
        self.seed = state["seed"]
        self._calls = state["calls"]
        self._issued = set(state["issued"])
        self._rewarded = set(state["rewarded"])
        self.observations = [Observation.from_dict(o) for o in state["observations"]]
        self._load_payload(state.get("payload", {}))

    def _payload_dict(self) -> dict[str, Any]:
        return {}

    def _load_payload(self, payload: Mapping[str, Any]) -> None:
        pass

    # -- conveniences -------------------------------------------------------

    def best_observation(self) -> Observation | None:
        best = None
        for obs in self.observations:
            if best is None or (obs.loss, obs.task_id) < (best.loss, best.task_id):
                best = obs
        return best

    def full_fidelity(self) -> FidelityBudget:
        return FidelityBudget(resource=self.max_resource, is_final=True)
