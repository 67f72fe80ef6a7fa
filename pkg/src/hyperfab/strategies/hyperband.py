"""Successive-halving brackets and the hyperband strategy.

All brackets of the schedule run in sequence. Within a round, the strategy
waits for every issued task to resolve (reward, failure or timeout notice),
then promotes the best completions to the next rung at ``eta`` times the
resource. Ties break toward the earlier task id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

from ..space import Configuration, sample
from .base import FidelityBudget, Observation, ProposedTask, SearchStrategy, StrategyError


@dataclass(frozen=True)
class Bracket:
    s: int
    n0: int
    r0: float
    rounds: tuple[tuple[int, float], ...]  # (n_i, r_i) per successive-halving rung


@dataclass(frozen=True)
class HyperbandPlan:
    max_resource: float
    eta: float
    brackets: tuple[Bracket, ...]

    @property
    def s_max(self) -> int:
        return self.brackets[0].s if self.brackets else 0


def _floor_div(n: int, eta: float) -> int:
    if eta == int(eta):
        return n // int(eta)
    return int(math.floor(n / eta + 1e-9))


def hyperband_schedule(max_resource: float, eta: float) -> HyperbandPlan:
    """Bracket table for (R, eta): s_max+1 brackets, aggressiveness s_max..0."""
    if max_resource < 1:
        raise ValueError(f"max resource must be >= 1, got {max_resource}")
    if eta <= 1:
        raise ValueError(f"eta must exceed 1, got {eta}")
    s_max = int(math.floor(math.log(max_resource) / math.log(eta) + 1e-9))
    brackets = []
    for s in range(s_max, -1, -1):
        n0 = int(math.ceil((s_max + 1) * eta ** s / (s + 1) - 1e-9))
        r0 = max_resource / eta ** s
        rounds = []
        n, r = n0, r0
        for _ in range(s + 1):
            rounds.append((n, r))
            n = _floor_div(n, eta)
            r = r * eta
        brackets.append(Bracket(s=s, n0=n0, r0=r0, rounds=tuple(rounds)))
    return HyperbandPlan(max_resource=max_resource, eta=eta, brackets=tuple(brackets))


class HyperbandStrategy(SearchStrategy):
    name = "hyperband"

    def __init__(self, max_resource: float, eta: float = 3.0, seed: int = 0) -> None:
        super().__init__(seed=seed, max_resource=max_resource)
        self.plan = hyperband_schedule(max_resource, eta)
        self._bracket_idx = 0
        self._round_idx = 0
        self._pending: list[Configuration] = []    # sampled/promoted, not yet handed out
        self._awaiting_ids: list[Configuration] = []  # handed out, waiting for task ids
        self._round_tasks: dict[int, Configuration] = {}
        self._round_losses: dict[int, float] = {}
        self._round_resolved: set[int] = set()

    # -- round bookkeeping ---------------------------------------------------

    def _current_round(self) -> tuple[int, float]:
        return self.plan.brackets[self._bracket_idx].rounds[self._round_idx]

    def _ensure_round(self) -> None:
        while (not self._pending and not self._awaiting_ids and not self._round_tasks
               and self._bracket_idx < len(self.plan.brackets)):
            bracket = self.plan.brackets[self._bracket_idx]
            if self._round_idx == 0:
                space = self._require_space()
                rng = self._next_rng()
                self._pending = [sample(space, rng) for _ in range(bracket.n0)]
                return
            # a promotion round with no survivors: skip to the next bracket
            self._bracket_idx += 1
            self._round_idx = 0

    @property
    def finished(self) -> bool:
        return (self._bracket_idx >= len(self.plan.brackets) and not self._pending
                and not self._awaiting_ids and not self._round_tasks)

    def generate_tasks(self, batch: int) -> list[ProposedTask]:
        self._require_space()
        self._ensure_round()
        if not self._pending:
            return []
        take, self._pending = self._pending[:batch], self._pending[batch:]
        self._awaiting_ids.extend(take)
        _, resource = self._current_round()
        budget = FidelityBudget(resource=resource, is_final=resource >= self.max_resource)
        return [ProposedTask(config=c, fidelity=budget) for c in take]

    def notify_issued(self, issued: list[tuple[int, ProposedTask]]) -> None:
        super().notify_issued(issued)
        for task_id, proposal in issued:
            if not self._awaiting_ids:
                raise StrategyError(f"unexpected issued task {task_id}")
            self._awaiting_ids.pop(0)
            self._round_tasks[task_id] = proposal.config

    def _ingest(self, rewards: list[Observation]) -> None:
        for obs in rewards:
            if obs.task_id in self._round_tasks:
                self._round_losses[obs.task_id] = obs.loss
                self._round_resolved.add(obs.task_id)
        self._maybe_close_round()

    def handle_failures(self, task_ids: list[int]) -> None:
        for task_id in task_ids:
            if task_id in self._round_tasks:
                self._round_resolved.add(task_id)
        self._maybe_close_round()

    def _maybe_close_round(self) -> None:
        if self._pending or self._awaiting_ids or not self._round_tasks:
            return
        if set(self._round_tasks) - self._round_resolved:
            return
        bracket = self.plan.brackets[self._bracket_idx]
        ranked = sorted(
            ((loss, task_id) for task_id, loss in self._round_losses.items()),
            key=lambda pair: (pair[0], pair[1]))
        survivors: list[Configuration] = []
        if self._round_idx + 1 < len(bracket.rounds):
            keep = bracket.rounds[self._round_idx + 1][0]
            survivors = [self._round_tasks[task_id] for _, task_id in ranked[:keep]]
        self._round_tasks.clear()
        self._round_losses.clear()
        self._round_resolved.clear()
        if self._round_idx + 1 < len(bracket.rounds) and survivors:
            self._round_idx += 1
            self._pending = survivors
        else:
            self._bracket_idx += 1
            self._round_idx = 0

    # -- checkpointing --------------------------------------------------------

    def _payload_dict(self) -> dict[str, Any]:
        def conf(c: Configuration) -> dict[str, Any]:
            return {"assignments": dict(c.assignments), "space_id": c.space_id,
                    "space_version": c.space_version}

        return {
            "bracket_idx": self._bracket_idx,
            "round_idx": self._round_idx,
            "pending": [conf(c) for c in self._pending],
            "round_tasks": {str(tid): conf(c) for tid, c in self._round_tasks.items()},
            "round_losses": {str(tid): loss for tid, loss in self._round_losses.items()},
            "round_resolved": sorted(self._round_resolved),
        }

    def _load_payload(self, payload: Mapping[str, Any]) -> None:
        def conf(raw: Mapping[str, Any]) -> Configuration:
            return Configuration(assignments=dict(raw["assignments"]),
                                 space_id=raw["space_id"], space_version=raw["space_version"])

        self._bracket_idx = payload["bracket_idx"]
        self._round_idx = payload["round_idx"]
        self._pending = [conf(c) for c in payload["pending"]]
        self._awaiting_ids = []
        self._round_tasks = {int(t): conf(c) for t, c in payload["round_tasks"].items()}
        self._round_losses = {int(t): loss for t, loss in payload["round_losses"].items()}
        self._round_resolved = set(payload["round_resolved"])
