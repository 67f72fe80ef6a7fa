"""Candidate pools and acquisition optimization over mixed conditional spaces.

Gradient ascent is unusable on hierarchical discrete spaces, so acquisition
optimization is pool search (uniform samples plus local mutations of the
incumbent, default 70/30) followed by hill-climbing over single-parameter
mutations. Pools are always drawn from the space version passed in, so they
track live space edits.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..space import Configuration, SearchSpace, encode, mutate_config, sample

DEFAULT_MUTATION_RATIO = 0.3


def generate_candidates(space: SearchSpace, n: int, rng: int | np.random.Generator,
                        pool_strategy: str = "mixed",
                        incumbent: Configuration | None = None,
                        mutation_ratio: float = DEFAULT_MUTATION_RATIO) -> list[Configuration]:
    """Draw a candidate pool of size ``n`` from the current space version."""
    if n < 1:
        raise ValueError("pool size must be positive")
    if pool_strategy not in ("mixed", "uniform"):
        raise ValueError(f"unknown pool strategy {pool_strategy!r}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    n_mut = 0
    if pool_strategy == "mixed" and incumbent is not None:
        n_mut = int(round(n * mutation_ratio))
    pool = [sample(space, rng) for _ in range(n - n_mut)]
    if n_mut:
        base = incumbent
        if base.space_version != space.version:
            base = None  # incumbent predates a space edit; fall back to sampling
        for _ in range(n_mut):
            pool.append(mutate_config(base, space, rng) if base is not None
                        else sample(space, rng))
    return pool


def _lexicographic_argmax(scores: np.ndarray, encoded: np.ndarray) -> int:
    """Index of the max score; ties resolve to the lexicographically lowest encoding."""
    best = float(scores.max())
    tied = np.flatnonzero(scores >= best - 1e-15)
    if len(tied) == 1:
        return int(tied[0])
    rows = [tuple(encoded[i]) for i in tied]
    return int(tied[min(range(len(tied)), key=lambda j: rows[j])])


def optimize_acquisition(score_fn: Callable[[np.ndarray], np.ndarray],
                         pool: Sequence[Configuration], space: SearchSpace,
                         rng: np.random.Generator, local_steps: int = 5,
                         neighbors_per_step: int = 8,
                         exclude: set | None = None) -> tuple[Configuration, float]:
    """Argmax of ``score_fn`` over the pool, then greedy single-mutation ascent.

    The result's score is at least the best pool score. ``exclude`` holds
    canonical keys the climber must not land on (observed or pending configs).
    """
    if not pool:
        raise ValueError("empty candidate pool")
    exclude = exclude or set()
    encoded = np.vstack([encode(c, space) for c in pool])
    scores = score_fn(encoded)
    idx = _lexicographic_argmax(scores, encoded)
    best_config, best_score = pool[idx], float(scores[idx])

    for _ in range(local_steps):
        neighbors = []
        for _ in range(neighbors_per_step):
            candidate = mutate_config(best_config, space, rng)
            if candidate.canonical_key() not in exclude:
                neighbors.append(candidate)
        if not neighbors:
            break
        enc = np.vstack([encode(c, space) for c in neighbors])
        neighbor_scores = score_fn(enc)
        j = _lexicographic_argmax(neighbor_scores, enc)
        if float(neighbor_scores[j]) > best_score + 1e-15:
            best_config, best_score = neighbors[j], float(neighbor_scores[j])
        else:
            break
    return best_config, best_score
