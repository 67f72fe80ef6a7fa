"""Regularized tournament evolution over the newest observations.

The population is the newest ``population_size`` observations (age-based
regularization). A step draws ``sample_size`` members uniformly, takes the
best as parent and re-samples exactly one active parameter; when the mutated
parameter owns a submodule, the affected children are re-sampled too.
"""

from __future__ import annotations

import numpy as np

from ..space import Configuration, sample, mutate_config
from .base import ProposedTask, SearchStrategy, StrategyError


class EvolutionStrategy(SearchStrategy):
    name = "evolution"

    def __init__(self, population_size: int = 20, sample_size: int = 5,
                 seed: int = 0, max_resource: float = 1.0) -> None:
        super().__init__(seed=seed, max_resource=max_resource)
        if population_size < 1 or sample_size < 1:
            raise ValueError("population and tournament sizes must be positive")
        self.population_size = population_size
        self.sample_size = sample_size

    def evolve_step(self, rng: np.random.Generator) -> Configuration:
        """One tournament + mutation; raises on an empty observation set."""
        if not self.observations:
            raise StrategyError("evolution requires at least one observation; cold-start randomly")
        space = self._require_space()
        population = self.observations[-self.population_size:]
        draws = min(self.sample_size, len(population))
        picks = [population[int(rng.integers(len(population)))] for _ in range(draws)]
        parent = min(picks, key=lambda o: (o.loss, o.task_id))
        if parent.config.space_version != space.version:
            # population member predates a space edit: restart from a fresh sample
            return sample(space, rng)
        return mutate_config(parent.config, space, rng)

    def generate_tasks(self, batch: int) -> list[ProposedTask]:
        space = self._require_space()
        rng = self._next_rng()
        budget = self.full_fidelity()
        out = []
        for _ in range(batch):
            if self.observations:
                config = self.evolve_step(rng)
            else:
                config = sample(space, rng)  # cold start
            out.append(ProposedTask(config=config, fidelity=budget))
        return out
