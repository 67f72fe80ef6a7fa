"""Search analytics: importance decomposition, marginal heatmaps, 2D maps,
and space-shrink suggestions.

Importance fits a random forest to the (encoded configuration -> reward)
mapping and decomposes each tree's prediction variance exactly over its leaf
partition: the unary term of a dimension is the variance of its marginal
prediction under a uniform product measure over the active encoded domains
([0,1] per numeric dim, the ordinal codes per choice dim). Within one tree the
unary terms sum to at most the total variance, so reported fractions sum to at
most one; the remainder is interactions plus residual.

Hierarchical spaces: a conditional parameter's marginal is activity-
conditioned (the measure covers only its active range), and the resulting
fraction is multiplied by the parameter's activation rate, so a rarely-active
parameter cannot dominate the report. On flat spaces this reduces to the
standard forest-based decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bo.forest import forest_fit, iter_leaves
from .space import (Configuration, DiffEntry, SearchSpace, SpaceDiff,
                    configuration_in_space, encode, space_layout)
from .strategies.base import Observation

FOREST_SIZE = 64
MIN_OBSERVATIONS = 10
SHRINK_MARGIN = 0.10


class InsufficientDataError(Exception):
    pass


@dataclass
class ImportanceReport:
    fractions: dict[str, float]
    activation_rates: dict[str, float]
    total_variance: float
    n_observations: int
    constant: bool = False

    def to_dict(self) -> dict:
        return {
            "fractions": dict(self.fractions),
            "activation_rates": dict(self.activation_rates),
            "total_variance": self.total_variance,
            "n_observations": self.n_observations,
            "constant": self.constant,
        }


@dataclass
class SpaceSuggestion:
    diff: SpaceDiff
    flagged_values: dict[str, list[str]]
    incumbent_task_ids: list[int]
    quantile: float
    rationale: str

    def to_dict(self) -> dict:
        return {
            "diff": self.diff.to_list(),
            "flagged_values": {k: list(v) for k, v in self.flagged_values.items()},
            "incumbent_task_ids": list(self.incumbent_task_ids),
            "quantile": self.quantile,
            "rationale": self.rationale,
        }


# ---------------------------------------------------------------------------
# shared encoding helpers


def _encoded_matrix(observations: Sequence[Observation],
                    space: SearchSpace) -> tuple[np.ndarray, np.ndarray, list[Observation]]:
    """Encode observations under ``space``, skipping incompatible configs."""
    rows, rewards, kept = [], [], []
    for obs in observations:
        config = obs.config
        if config.space_version != space.version or config.space_id != space.space_id:
            if not configuration_in_space(config, space):
                continue
            config = Configuration(assignments=config.assignments,
                                   space_id=space.space_id, space_version=space.version)
        rows.append(encode(config, space))
        rewards.append(obs.reward)
        kept.append(obs)
    if not rows:
        raise InsufficientDataError("no observations compatible with the space")
    return np.vstack(rows), np.array(rewards), kept


def _domains(space: SearchSpace):
    """Per-dim active reference measure: [0,1] numeric, ordinal codes for choices."""
    layout = space_layout(space)
    cat_universe: dict[int, frozenset[float]] = {}
    for i, dim in enumerate(layout):
        if dim.kind == "choice":
            k = len(dim.values)
            codes = (0.0,) if k == 1 else tuple(j / (k - 1) for j in range(k))
            cat_universe[i] = frozenset(codes)
    return layout, cat_universe


def _leaf_cells(tree, n_dims: int, cat_universe) -> list[tuple[list, dict, float, float]]:
    """Leaves as (numeric bounds clipped to [0,1], cat sets, weight, value)."""
    cells = []
    for bounds, cat_sets, value in iter_leaves(tree, n_dims, cat_universe):
        weight = 1.0
        coverages: list = [None] * n_dims
        for d in range(n_dims):
            if d in cat_universe:
                kept = cat_sets.get(d, cat_universe[d])
                cov = len(kept) / len(cat_universe[d])
                coverages[d] = kept
            else:
                lo, hi = bounds[d]
                cov = max(0.0, min(hi, 1.0) - max(lo, 0.0))
                coverages[d] = (max(lo, 0.0), min(hi, 1.0))
            weight *= cov
            if weight == 0.0:
                break
        if weight > 0.0:
            cells.append((coverages, cat_sets, weight, value))
    return cells


def _tree_variance(cells) -> tuple[float, float]:
    total_w = sum(w for _, _, w, _ in cells)
    if total_w <= 0:
        return 0.0, 0.0
    mean = sum(w * value for _, _, w, value in cells) / total_w
    var = sum(w * value * value for _, _, w, value in cells) / total_w - mean * mean
    return max(var, 0.0), mean


def _coverage_of(coverage, d: int, cat_universe) -> float:
    if d in cat_universe:
        return len(coverage[d]) / len(cat_universe[d])
    lo, hi = coverage[d]
    return max(0.0, hi - lo)


def _unary_variance(cells, d: int, cat_universe) -> float:
    """Variance over dim d of the tree's marginal prediction (exact)."""
    if d in cat_universe:
        universe = sorted(cat_universe[d])
        k = len(universe)
        marginals = []
        for code in universe:
            m = 0.0
            for coverage, _, w, value in cells:
                if code in coverage[d]:
                    cov_d = _coverage_of(coverage, d, cat_universe)
                    m += value * (w / cov_d)
            marginals.append(m)
        mean = sum(marginals) / k
        return max(sum(m * m for m in marginals) / k - mean * mean, 0.0)

    # numeric: the marginal is piecewise constant between leaf breakpoints
    points = {0.0, 1.0}
    for coverage, _, w, _ in cells:
        lo, hi = coverage[d]
        points.add(lo)
        points.add(hi)
    grid = sorted(points)
    total = 0.0
    total_sq = 0.0
    for a, b in zip(grid, grid[1:]):
        if b <= a:
            continue
        mid = (a + b) / 2.0
        m = 0.0
        for coverage, _, w, value in cells:
            lo, hi = coverage[d]
            if lo <= mid < hi or (mid == hi == 1.0 and lo < hi):
                cov_d = hi - lo
                if cov_d > 0:
                    m += value * (w / cov_d)
        seg = b - a
        total += m * seg
        total_sq += m * m * seg
    return max(total_sq - total * total, 0.0)


# ---------------------------------------------------------------------------
# operations


def importance(observations: Sequence[Observation], space: SearchSpace,
               n_trees: int = FOREST_SIZE, seed: int = 0) -> ImportanceReport:
    """Per-parameter fraction of performance variance, activity-weighted."""
    if len(observations) < MIN_OBSERVATIONS:
        raise InsufficientDataError(
            f"need at least {MIN_OBSERVATIONS} observations, got {len(observations)}")
    x, y, kept = _encoded_matrix(observations, space)
    layout, cat_universe = _domains(space)
    n_dims = len(layout)
    rates = {
        layout[d].path: float(np.mean(x[:, d] != -1.0)) for d in range(n_dims)
    }
    if float(np.ptp(y)) < 1e-15:
        return ImportanceReport(
            fractions={dim.path: 0.0 for dim in layout},
            activation_rates=rates, total_variance=0.0,
            n_observations=len(kept), constant=True)

    # standardize targets so tree structure (and thus the report) is exactly
    # invariant under affine reward rescaling; rounding kills ulp-level noise
    # that could otherwise flip near-tied split decisions between two fits
    y_std = float(y.std())
    ys = np.round((y - float(y.mean())) / y_std, 12)
    model = forest_fit(x, ys, n_trees=n_trees, cat_dims=set(cat_universe), seed=seed)
    fraction_sums = np.zeros(n_dims)
    used_trees = 0
    total_var_acc = 0.0
    for tree in model.trees:
        cells = _leaf_cells(tree, n_dims, cat_universe)
        v_total, _ = _tree_variance(cells)
        total_var_acc += v_total
        if v_total <= 1e-18:
            continue
        used_trees += 1
        for d in range(n_dims):
            fraction_sums[d] += _unary_variance(cells, d, cat_universe) / v_total
    fractions = fraction_sums / used_trees if used_trees else fraction_sums
    report_fractions = {
        layout[d].path: float(fractions[d] * rates[layout[d].path]) for d in range(n_dims)
    }
    return ImportanceReport(fractions=report_fractions, activation_rates=rates,
                            total_variance=total_var_acc / len(model.trees) * y_std ** 2,
                            n_observations=len(kept))


def pairwise_marginal(observations: Sequence[Observation], space: SearchSpace,
                      path_a: str, path_b: str, grid: int = 10,
                      n_trees: int = FOREST_SIZE, seed: int = 0
                      ) -> tuple[list, list, np.ndarray]:
    """Grid of forest predictions with every other dimension averaged out."""
    layout, cat_universe = _domains(space)
    index = {dim.path: i for i, dim in enumerate(layout)}
    if path_a not in index or path_b not in index:
        missing = path_a if path_a not in index else path_b
        raise KeyError(f"unknown parameter path {missing!r}")
    if len(observations) < 2:
        raise InsufficientDataError("need at least 2 observations")
    x, y, _ = _encoded_matrix(observations, space)
    model = forest_fit(x, y, n_trees=n_trees, cat_dims=set(cat_universe), seed=seed)

    def axis_codes(d: int) -> list[float]:
        dim = layout[d]
        if dim.kind == "choice":
            return sorted(cat_universe[d])
        if dim.kind == "int":
            span = int(dim.hi - dim.lo)
            count = span + 1
            if count <= grid:
                return [0.0] if span == 0 else [i / span for i in range(count)]
        if grid == 1:
            return [0.5]
        return [i / (grid - 1) for i in range(grid)]

    def axis_values(d: int, codes: list[float]) -> list:
        from .space import _decode_value

        return [_decode_value(layout[d], c) for c in codes]

    da, db = index[path_a], index[path_b]
    codes_a, codes_b = axis_codes(da), axis_codes(db)
    matrix = np.zeros((len(codes_a), len(codes_b)))
    for tree in model.trees:
        cells = _leaf_cells(tree, len(layout), cat_universe)
        for i, va in enumerate(codes_a):
            for j, vb in enumerate(codes_b):
                m = 0.0
                for coverage, _, w, value in cells:
                    if not _contains(coverage, da, va, cat_universe):
                        continue
                    if not _contains(coverage, db, vb, cat_universe):
                        continue
                    cov = _coverage_of(coverage, da, cat_universe) * \
                        _coverage_of(coverage, db, cat_universe)
                    if cov > 0:
                        m += value * (w / cov)
                matrix[i, j] += m
    matrix /= len(model.trees)
    return axis_values(da, codes_a), axis_values(db, codes_b), matrix


def _contains(coverage, d: int, code: float, cat_universe) -> bool:
    if d in cat_universe:
        return code in coverage[d]
    lo, hi = coverage[d]
    return lo <= code < hi or (code == 1.0 and hi == 1.0 and lo < hi)


def gower_distance(xa: np.ndarray, xb: np.ndarray, cat_dims: frozenset[int]) -> float:
    """Mean per-dim dissimilarity; dims inactive in either config are excluded."""
    total, used = 0.0, 0
    for d in range(len(xa)):
        a, b = xa[d], xb[d]
        if a == -1.0 or b == -1.0:
            continue
        used += 1
        if d in cat_dims:
            total += 0.0 if a == b else 1.0
        else:
            total += abs(a - b)
    return total / used if used else 1.0


def project_2d(observations: Sequence[Observation],
               space: SearchSpace) -> list[tuple[float, float, float]]:
    """Classical MDS of the Gower metric over mixed encoded dimensions.

    Deterministic given input order; signs fixed so the first point's
    coordinates are non-negative.
    """
    if len(observations) < 2:
        raise InsufficientDataError("need at least 2 observations")
    x, rewards, kept = _encoded_matrix(observations, space)
    layout, cat_universe = _domains(space)
    cat_dims = frozenset(cat_universe)
    n = len(x)
    d2 = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist = gower_distance(x[i], x[j], cat_dims)
            d2[i, j] = d2[j, i] = dist * dist
    j_center = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * j_center @ d2 @ j_center
    eigvals, eigvecs = np.linalg.eigh(b)
    order = np.argsort(eigvals)[::-1]
    coords = np.zeros((n, 2))
    for axis in range(2):
        if axis < len(order) and eigvals[order[axis]] > 1e-12:
            coords[:, axis] = eigvecs[:, order[axis]] * math.sqrt(eigvals[order[axis]])
    for axis in range(2):
        column = coords[:, axis]
        anchor = next((v for v in column if abs(v) > 1e-12), None)
        if anchor is not None and anchor < 0:
            coords[:, axis] = -column
    return [(float(coords[i, 0]), float(coords[i, 1]), float(rewards[i]))
            for i in range(n)]


def _shrunk_range(dim_kind: str, lo, hi, values: list[float]) -> tuple | None:
    width = hi - lo
    if width <= 0:
        return None
    new_lo = max(lo, min(values) - SHRINK_MARGIN * width)
    new_hi = min(hi, max(values) + SHRINK_MARGIN * width)
    if dim_kind == "int":
        new_lo = max(int(lo), int(math.floor(new_lo)))
        new_hi = min(int(hi), int(math.ceil(new_hi)))
    if (new_lo, new_hi) == (lo, hi):
        return None
    return new_lo, new_hi


def suggest_space(observations: Sequence[Observation], space: SearchSpace,
                  q: float = 0.2) -> SpaceSuggestion:
    """Shrink numeric ranges to the incumbents' box (with a 10% margin).

    Categorical values absent from the incumbents are flagged for removal but
    never auto-removed; a human applies them through a space edit.
    """
    if len(observations) < MIN_OBSERVATIONS:
        raise InsufficientDataError(
            f"need at least {MIN_OBSERVATIONS} observations, got {len(observations)}")
    if not 0 < q <= 1:
        raise ValueError("q must be in (0, 1]")
    _, rewards, kept = _encoded_matrix(observations, space)
    if float(np.ptp(rewards)) < 1e-15:
        return SpaceSuggestion(diff=SpaceDiff(entries=()), flagged_values={},
                               incumbent_task_ids=[], quantile=q,
                               rationale="no signal: rewards are uniform")
    ranked = sorted(kept, key=lambda o: (o.loss, o.task_id))
    incumbents = ranked[: max(1, math.ceil(q * len(ranked)))]

    layout = space_layout(space)
    by_node: dict[str, list] = {}
    node_kind: dict[str, tuple] = {}
    for dim in layout:
        node_kind.setdefault(dim.node_path, (dim.kind, dim.lo, dim.hi, dim.values))
        values = [obs.config.assignments[dim.path] for obs in incumbents
                  if dim.path in obs.config.assignments]
        if values:
            by_node.setdefault(dim.node_path, []).extend(values)

    entries: list[DiffEntry] = []
    flagged: dict[str, list[str]] = {}
    for node_path, (kind, lo, hi, choices) in node_kind.items():
        values = by_node.get(node_path)
        if not values:
            continue
        if kind == "choice":
            unused = [v for v in choices if v not in set(values)]
            if unused:
                flagged[node_path] = unused
            continue
        shrunk = _shrunk_range(kind, lo, hi, values)
        if shrunk is not None:
            entries.append(DiffEntry(node_path, "range-narrowed",
                                     [lo, hi], [shrunk[0], shrunk[1]]))
    rationale = (f"top {q:.0%} of {len(kept)} observations "
                 f"({len(incumbents)} incumbents) span the proposed ranges")
    return SpaceSuggestion(diff=SpaceDiff(entries=tuple(entries)), flagged_values=flagged,
                           incumbent_task_ids=[o.task_id for o in incumbents],
                           quantile=q, rationale=rationale)
