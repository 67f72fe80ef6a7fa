"""Pluggable search strategies: random, hyperband, evolution (BO lives in ``hyperfab.bo``)."""

from __future__ import annotations

from typing import Any, Callable

from .base import (FidelityBudget, Observation, ProposedTask, SearchStrategy,
                   StrategyError)
from .evolution import EvolutionStrategy
from .hyperband import Bracket, HyperbandPlan, HyperbandStrategy, hyperband_schedule
from .random_search import RandomStrategy

_REGISTRY: dict[str, Callable[..., SearchStrategy]] = {}


def register_strategy(name: str, factory: Callable[..., SearchStrategy]) -> None:
    _REGISTRY[name] = factory


def make_strategy(name: str, seed: int = 0, max_resource: float = 1.0,
                  params: dict[str, Any] | None = None) -> SearchStrategy:
    """Instantiate a strategy by JobSpec name with its per-strategy parameters."""
    params = dict(params or {})
    if name == "random":
        return RandomStrategy(seed=seed, max_resource=max_resource)
    if name == "hyperband":
        return HyperbandStrategy(
            max_resource=params.get("R", max_resource),
            eta=params.get("eta", 3.0), seed=seed)
    if name == "evolution":
        return EvolutionStrategy(
            population_size=params.get("P", 20), sample_size=params.get("S", 5),
            seed=seed, max_resource=max_resource)
    if name == "bo":
        from ..bo.strategy import BoStrategy  # local import: bo depends on this package

        return BoStrategy(seed=seed, max_resource=max_resource, **params)
    if name in _REGISTRY:
        return _REGISTRY[name](seed=seed, max_resource=max_resource, **params)
    raise StrategyError(f"unknown strategy {name!r}")


__all__ = [
    "Bracket",
    "EvolutionStrategy",
    "FidelityBudget",
    "HyperbandPlan",
    "HyperbandStrategy",
    "Observation",
    "ProposedTask",
    "RandomStrategy",
    "SearchStrategy",
    "StrategyError",
    "hyperband_schedule",
    "make_strategy",
    "register_strategy",
]
