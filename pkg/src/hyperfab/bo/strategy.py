"""Composable Bayesian optimization assembled from the five component slots:
surrogate (GP or forest), acquisition (EI or LCB), acquisition optimizer,
candidate generator and batch suggester (constant liar)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from ..space import (Configuration, SearchSpace, configuration_in_space, encode,
                     enumerate_configurations, space_layout)
from ..strategies.base import ProposedTask, SearchStrategy, StrategyError
from .acquisition import acq_ei, acq_lcb
from .candidates import generate_candidates, optimize_acquisition
from .forest import forest_fit, forest_predict
from .gp import gp_fit, gp_predict, gp_refit_light


@dataclass
class BatchContext:
    """Pending proposals a batch suggester pretends were already observed."""

    pending: list[np.ndarray] = field(default_factory=list)
    liar_value: float = 0.0
    truncated: bool = False


def _choice_dims(space: SearchSpace) -> frozenset[int]:
    return frozenset(i for i, dim in enumerate(space_layout(space)) if dim.kind == "choice")


class BoStrategy(SearchStrategy):
    name = "bo"

    def __init__(self, surrogate: str = "gp", acquisition: str = "ei", kappa: float = 2.0,
                 pool_size: int = 512, local_steps: int = 5, init_random: int = 12,
                 n_trees: int = 48, max_features: float | None = 0.5,
                 enum_limit: int = 512, seed: int = 0, max_resource: float = 1.0) -> None:
        super().__init__(seed=seed, max_resource=max_resource)
        if surrogate not in ("gp", "forest"):
            raise StrategyError(f"unknown surrogate {surrogate!r}")
        if acquisition not in ("ei", "lcb"):
            raise StrategyError(f"unknown acquisition {acquisition!r}")
        self.surrogate = surrogate
        self.acquisition = acquisition
        self.kappa = kappa
        self.pool_size = pool_size
        self.local_steps = local_steps
        self.init_random = init_random
        self.n_trees = n_trees
        self.max_features = max_features
        self.enum_limit = enum_limit
        self._exhausted = False
        self._enum_cache: tuple[int, list[Configuration], np.ndarray] | None = None

    # -- surrogate plumbing ---------------------------------------------------

    def _training_set(self, space: SearchSpace) -> tuple[np.ndarray, np.ndarray]:
        """Encode observations under the current space; incompatible ones are skipped."""
        xs, ys = [], []
        for obs in self.observations:
            config = obs.config
            if config.space_version != space.version:
                if not configuration_in_space(config, space):
                    continue
                config = Configuration(assignments=config.assignments,
                                       space_id=space.space_id, space_version=space.version)
            xs.append(encode(config, space))
            ys.append(obs.loss)
        if not xs:
            raise StrategyError("no encodable observations for the bound space")
        return np.vstack(xs), np.array(ys)

    def _fit(self, space: SearchSpace, x: np.ndarray, y: np.ndarray, seed: int):
        if self.surrogate == "gp":
            model = gp_fit(x, y)
            return model, lambda xq: gp_predict(model, xq)
        model = forest_fit(x, y, n_trees=self.n_trees, cat_dims=_choice_dims(space),
                           seed=seed, max_features=self.max_features)
        return model, lambda xq: forest_predict(model, xq)

    def _refit_light(self, space: SearchSpace, model, x: np.ndarray, y: np.ndarray,
                     ctx: BatchContext, seed: int):
        """Fold pending liars into the training set without re-tuning hyperparameters."""
        if not ctx.pending:
            return model, (lambda xq: gp_predict(model, xq)) if self.surrogate == "gp" \
                else (lambda xq: forest_predict(model, xq))
        liars_x = np.vstack(ctx.pending)
        liars_y = np.full(len(ctx.pending), ctx.liar_value)
        if self.surrogate == "gp":
            lier = gp_refit_light(model, liars_x, liars_y)
            return lier, lambda xq: gp_predict(lier, xq)
        x_aug = np.vstack([x, liars_x])
        y_aug = np.concatenate([y, liars_y])
        lier = forest_fit(x_aug, y_aug, n_trees=self.n_trees,
                          cat_dims=_choice_dims(space), seed=seed,
                          max_features=self.max_features)
        return lier, lambda xq: forest_predict(lier, xq)

    def _score_fn(self, predict: Callable[[np.ndarray], Any],
                  f_best: float) -> Callable[[np.ndarray], np.ndarray]:
        if self.acquisition == "ei":
            return lambda xq: acq_ei(predict(xq), f_best)
        return lambda xq: -acq_lcb(predict(xq), self.kappa)  # maximize -LCB = minimize LCB

    # -- suggestion -----------------------------------------------------------

    def _enumerated(self, space: SearchSpace) -> tuple[list[Configuration], np.ndarray] | None:
        if self._enum_cache is not None and self._enum_cache[0] == space.version:
            return self._enum_cache[1], self._enum_cache[2]
        configs = enumerate_configurations(space, limit=self.enum_limit)
        if configs is None:
            return None
        encoded = np.vstack([encode(c, space) for c in configs])
        self._enum_cache = (space.version, configs, encoded)
        return configs, encoded

    def suggest_batch(self, q: int, rng: np.random.Generator,
                      ctx: BatchContext | None = None) -> tuple[list[Configuration], BatchContext]:
        """Sequential constant-liar batch: argmax acquisition, lie, refit, repeat."""
        if q < 1:
            raise StrategyError("batch size must be positive")
        space = self._require_space()
        ctx = ctx or BatchContext()
        x, y = self._training_set(space)
        ctx.liar_value = float(y.min())
        f_best = float(y.min())

        model, _ = self._fit(space, x, y, seed=int(rng.integers(2 ** 31)))
        seen = {o.config.canonical_key() for o in self.observations}
        enumerated = self._enumerated(space)

        chosen: list[Configuration] = []
        pending_keys: set = set()
        for _ in range(q):
            _, predict = self._refit_light(space, model, x, y, ctx,
                                           seed=int(rng.integers(2 ** 31)))
            score_fn = self._score_fn(predict, f_best)
            exclude = seen | pending_keys
            if enumerated is not None:
                # exhaustive argmax over the whole space; local climbing is moot
                configs, encoded = enumerated
                keep = [i for i, c in enumerate(configs) if c.canonical_key() not in exclude]
                if not keep:
                    ctx.truncated = True
                    self._exhausted = True
                    break
                scores = score_fn(encoded[keep])
                best = float(scores.max())
                tied = [keep[i] for i in np.flatnonzero(scores >= best - 1e-15)]
                idx = min(tied, key=lambda i: tuple(encoded[i]))
                config = configs[idx]
            else:
                incumbent = self.best_observation()
                pool = generate_candidates(space, self.pool_size, rng,
                                           incumbent=incumbent.config if incumbent else None)
                pool = [c for c in pool if c.canonical_key() not in exclude] or pool
                config, _ = optimize_acquisition(score_fn, pool, space, rng,
                                                 local_steps=self.local_steps, exclude=exclude)
                if config.canonical_key() in exclude:
                    ctx.truncated = True
                    break
            chosen.append(config)
            pending_keys.add(config.canonical_key())
            ctx.pending.append(encode(config, space))
        return chosen, ctx

    def generate_tasks(self, batch: int) -> list[ProposedTask]:
        space = self._require_space()
        rng = self._next_rng()
        budget = self.full_fidelity()
        if len(self.observations) < self.init_random:
            from ..space import sample

            want = min(batch, self.init_random - len(self.observations))
            return [ProposedTask(config=sample(space, rng), fidelity=budget)
                    for _ in range(want)]
        chosen, _ = self.suggest_batch(batch, rng)
        return [ProposedTask(config=c, fidelity=budget) for c in chosen]

    @property
    def finished(self) -> bool:
        return self._exhausted

    def _payload_dict(self) -> dict[str, Any]:
        return {"exhausted": self._exhausted}

    def _load_payload(self, payload: Mapping[str, Any]) -> None:
        self._exhausted = payload.get("exhausted", False)
