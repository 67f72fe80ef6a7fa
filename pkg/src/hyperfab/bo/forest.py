"""Random-forest surrogate over encoded configuration vectors.

Trees are grown to full depth (min leaf 1) on bootstrap resamples, considering
every dimension at each split. Numeric dims split on thresholds; ordinal-coded
choice dims split on value subsets found by ordering categories by their mean
target (optimal for squared error). The inactive sentinel (-1) is just another
splittable value, so conditional structure is learnable.

The advisor reuses these trees: each leaf is an axis-aligned cell, which makes
exact marginal integrals over the encoded box cheap to compute.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gp import SurrogatePosterior

VAR_FLOOR = 1e-12


@dataclass
class TreeNode:
    # internal nodes carry a split, leaves carry a value
    dim: int = -1
    threshold: float = 0.0                    # numeric split: x[dim] <= threshold
    left_values: frozenset[float] = frozenset()  # categorical split: x[dim] in set
    categorical: bool = False
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0
    count: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class ForestModel:
    trees: list[TreeNode]
    cat_dims: frozenset[int]
    cat_values: dict[int, tuple[float, ...]] = field(default_factory=dict)
    n_dims: int = 0


def _best_split(x: np.ndarray, y: np.ndarray, cat_dims: frozenset[int],
                min_leaf: int, dims: np.ndarray) -> tuple[int, float, frozenset[float], bool] | None:
    n = len(y)
    if n < 2 * min_leaf:
        return None
    y_list = y.tolist()
    total = sum(y_list)
    total2 = sum(v * v for v in y_list)
    base = total2 - total * total / n
    if base <= 1e-24:
        return None
    best = None
    best_gain = 1e-12
    for dim in dims:
        col = x[:, dim].tolist()
        if dim in cat_dims:
            # order categories by mean target; scan prefix subsets
            sums: dict[float, list[float]] = {}
            for v, t in zip(col, y_list):
                acc = sums.get(v)
                if acc is None:
                    sums[v] = [t, t * t, 1.0]
                else:
                    acc[0] += t
                    acc[1] += t * t
                    acc[2] += 1.0
            if len(sums) < 2:
                continue
            ordered = sorted(sums, key=lambda v: sums[v][0] / sums[v][2])
            s, s2, nl = 0.0, 0.0, 0.0
            for i in range(len(ordered) - 1):
                acc = sums[ordered[i]]
                s += acc[0]
                s2 += acc[1]
                nl += acc[2]
                nr = n - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                gain = base - (s2 - s * s / nl) - ((total2 - s2) - (total - s) ** 2 / nr)
                if gain > best_gain:
                    best_gain = gain
                    best = (dim, 0.0, frozenset(ordered[: i + 1]), True)
        else:
            order = sorted(range(n), key=col.__getitem__)
            s, s2 = 0.0, 0.0
            for i in range(n - 1):
                t = y_list[order[i]]
                s += t
                s2 += t * t
                vi, vj = col[order[i]], col[order[i + 1]]
                if vi == vj:
                    continue
                nl = i + 1
                nr = n - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                gain = base - (s2 - s * s / nl) - ((total2 - s2) - (total - s) ** 2 / nr)
                if gain > best_gain:
                    best_gain = gain
                    best = (dim, (vi + vj) / 2.0, frozenset(), False)
    return best


def _grow(x: np.ndarray, y: np.ndarray, cat_dims: frozenset[int], min_leaf: int,
          n_split_dims: int, rng: np.random.Generator) -> TreeNode:
    d = x.shape[1]
    if n_split_dims >= d:
        dims = _ALL_DIMS_CACHE.setdefault(d, np.arange(d))
    else:
        dims = rng.choice(d, size=n_split_dims, replace=False)
    split = _best_split(x, y, cat_dims, min_leaf, dims)
    if split is None and n_split_dims < d:
        split = _best_split(x, y, cat_dims, min_leaf, _ALL_DIMS_CACHE.setdefault(d, np.arange(d)))
    if split is None:
        return TreeNode(value=float(y.mean()), count=len(y))
    dim, threshold, left_values, categorical = split
    if categorical:
        mask = np.isin(x[:, dim], list(left_values))
    else:
        mask = x[:, dim] <= threshold
    node = TreeNode(dim=dim, threshold=threshold, left_values=left_values,
                    categorical=categorical, count=len(y))
    node.left = _grow(x[mask], y[mask], cat_dims, min_leaf, n_split_dims, rng)
    node.right = _grow(x[~mask], y[~mask], cat_dims, min_leaf, n_split_dims, rng)
    return node


_ALL_DIMS_CACHE: dict[int, np.ndarray] = {}


def forest_fit(x: np.ndarray, y: np.ndarray, n_trees: int = 64,
               cat_dims: frozenset[int] | set[int] | None = None,
               min_leaf: int = 1, seed: int = 0, bootstrap: bool = True,
               max_features: float | None = None) -> ForestModel:
    """Grow ``n_trees`` full-depth trees on bootstrap resamples.

    ``max_features`` below 1.0 considers a random dim subset per split (pure
    nodes still split on any dim if the subset finds nothing); the default
    considers every dim, which keeps single-signal fits exact.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if n_trees < 1:
        raise ValueError("need at least one tree")
    if not np.isfinite(y).all():
        raise ValueError("non-finite targets")
    cat = frozenset(cat_dims or ())
    rng = np.random.default_rng(seed)
    n, d = x.shape
    n_split_dims = d if max_features is None else max(1, int(round(max_features * d)))
    trees = []
    for _ in range(n_trees):
        idx = rng.integers(0, n, size=n) if bootstrap and n > 1 else np.arange(n)
        trees.append(_grow(x[idx], y[idx], cat, min_leaf, n_split_dims, rng))
    cat_values = {dim: tuple(sorted(set(float(v) for v in x[:, dim]))) for dim in cat}
    return ForestModel(trees=trees, cat_dims=cat, cat_values=cat_values, n_dims=x.shape[1])


def _tree_predict(node: TreeNode, x: np.ndarray, out: np.ndarray,
                  idx: np.ndarray) -> None:
    if node.is_leaf:
        out[idx] = node.value
        return
    col = x[idx, node.dim]
    if node.categorical:
        mask = np.isin(col, list(node.left_values))
    else:
        mask = col <= node.threshold
    _tree_predict(node.left, x, out, idx[mask])
    _tree_predict(node.right, x, out, idx[~mask])


def forest_predict(model: ForestModel, xq: np.ndarray) -> SurrogatePosterior:
    """Mean over trees; variance is the across-tree spread, floored at 1e-12."""
    xq = np.atleast_2d(np.asarray(xq, dtype=float))
    preds = np.empty((len(model.trees), xq.shape[0]))
    idx = np.arange(xq.shape[0])
    for t, tree in enumerate(model.trees):
        _tree_predict(tree, xq, preds[t], idx)
    mean = preds.mean(axis=0)
    var = np.maximum(preds.var(axis=0), VAR_FLOOR)
    return SurrogatePosterior(mean=mean, var=var)


def iter_leaves(tree: TreeNode, n_dims: int,
                cat_universe: dict[int, frozenset[float]] | None = None):
    """Yield (numeric bounds, categorical value sets, leaf value) per leaf cell.

    ``bounds[d]`` is the interval a numeric dim is constrained to. For each
    categorical dim, ``cat_sets[d]`` is the subset of ``cat_universe[d]``
    reaching the leaf (a categorical right branch keeps the complement of the
    split's left set).
    """
    universe = cat_universe or {}

    def walk(node: TreeNode, bounds: list[tuple[float, float]],
             cat_sets: dict[int, frozenset[float]]):
        if node.is_leaf:
            yield list(bounds), dict(cat_sets), node.value
            return
        if node.categorical:
            current = cat_sets.get(node.dim, universe.get(node.dim, node.left_values))
            left = dict(cat_sets)
            left[node.dim] = current & node.left_values
            yield from walk(node.left, bounds, left)
            right = dict(cat_sets)
            right[node.dim] = current - node.left_values
            yield from walk(node.right, bounds, right)
        else:
            lo, hi = bounds[node.dim]
            bounds[node.dim] = (lo, min(hi, node.threshold))
            yield from walk(node.left, bounds, cat_sets)
            bounds[node.dim] = (max(lo, node.threshold), hi)
            yield from walk(node.right, bounds, cat_sets)
            bounds[node.dim] = (lo, hi)

    start = {dim: values for dim, values in universe.items()}
    yield from walk(tree, [(-np.inf, np.inf)] * n_dims, start)
