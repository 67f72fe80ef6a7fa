"""Baseline strategy: independent uniform samples at full fidelity."""

from __future__ import annotations

from ..space import sample
from .base import ProposedTask, SearchStrategy


class RandomStrategy(SearchStrategy):
    name = "random"

    def generate_tasks(self, batch: int) -> list[ProposedTask]:
        space = self._require_space()
        rng = self._next_rng()
        budget = self.full_fidelity()
        return [ProposedTask(config=sample(space, rng), fidelity=budget) for _ in range(batch)]
