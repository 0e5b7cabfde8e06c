"""Regression forests grown from scratch: bagged CART with feature subsampling.

Trees split greedily on exact variance reduction over midpoints of sorted
distinct feature values; gain ties resolve to the lowest feature index, then
the lowest threshold. Per-tree RNG streams derive from (seed, tree index),
so fits are bit-reproducible for any thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _tree
from .dataset import kfold_split
from .errors import DimMismatch, EmptyData


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters of one forest."""

    n_trees: int
    min_samples_split: int = 10
    min_samples_leaf: int = 1
    max_features: str | int = "sqrt"
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if isinstance(self.max_features, str):
            if self.max_features not in ("sqrt", "all"):
                raise ValueError("max_features must be 'sqrt', 'all', or a count")
        elif self.max_features < 1:
            raise ValueError("max_features count must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be None or >= 0")

    def resolve_max_features(self, p: int) -> int:
        if self.max_features == "sqrt":
            return min(p, math.ceil(math.sqrt(p)))
        if self.max_features == "all":
            return p
        if self.max_features > p:
            raise ValueError(f"max_features={self.max_features} exceeds p={p}")
        return int(self.max_features)


def default_outcome_config(seed: int = 0) -> ForestConfig:
    """Stock hyperparameters for the outcome nuisance (100 trees, leaf 1)."""
    return ForestConfig(n_trees=100, min_samples_split=10, min_samples_leaf=1,
                        max_features="sqrt", max_depth=None, bootstrap=True, seed=seed)


def default_policy_config(seed: int = 0) -> ForestConfig:
    """Stock hyperparameters for the policy nuisance (200 trees, leaf 3)."""
    return ForestConfig(n_trees=200, min_samples_split=10, min_samples_leaf=3,
                        max_features="sqrt", max_depth=None, bootstrap=True, seed=seed)


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    sample: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        return int(_tree.tree_depth(self.feature, self.left, self.right))


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[Tree, ...]
    config: ForestConfig
    n_features: int
    oob_score: float | None = None


def _tree_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(index,)).generate_state(1)[0])


def fit_forest(X, y, config: ForestConfig, n_threads: int = 1) -> ForestModel:
    """Grow a forest; deterministic given (X, y, config) for any n_threads.

    When bootstrap is on, the out-of-bag R^2 is attached whenever every row
    is out of bag for at least one tree (otherwise oob_score stays None).
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.ascontiguousarray(np.asarray(y, dtype=np.float64))
    if X.ndim != 2:
        raise DimMismatch("X must be 2-D")
    if y.ndim != 1 or y.size != X.shape[0]:
        raise DimMismatch("y length must match X rows")
    n, p = X.shape
    if n == 0:
        raise EmptyData("cannot fit a forest on zero rows")
    if np.any(~np.isfinite(X)) or np.any(~np.isfinite(y)):
        raise ValueError("X and y must be finite")
    m_try = config.resolve_max_features(p)
    depth = -1 if config.max_depth is None else config.max_depth
    seeds = [_tree_seed(config.seed, i) for i in range(config.n_trees)]

    def grow(i):
        parts = _tree.grow_tree(
            X, y, config.min_samples_split, config.min_samples_leaf,
            depth, m_try, config.bootstrap, seeds[i],
        )
        return Tree(*parts)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            trees = tuple(pool.map(grow, range(config.n_trees)))
    else:
        trees = tuple(grow(i) for i in range(config.n_trees))

    oob = None
    if config.bootstrap:
        oob = _oob_r2(trees, X, y)
    return ForestModel(trees=trees, config=config, n_features=p, oob_score=oob)


def _oob_r2(trees, X, y) -> float | None:
    n = X.shape[0]
    total = np.zeros(n)
    count = np.zeros(n)
    single = np.zeros(n)
    for tree in trees:
        in_bag = np.zeros(n, dtype=bool)
        in_bag[tree.sample] = True
        single[:] = 0.0
        _tree.predict_tree(tree.feature, tree.threshold, tree.left, tree.right,
                           tree.value, X, single)
        oob = ~in_bag
        total[oob] += single[oob]
        count[oob] += 1
    if np.any(count == 0):
        return None
    resid = y - total / count
    denom = np.sum((y - y.mean()) ** 2)
    if denom == 0.0:
        return None
    return float(1.0 - np.sum(resid**2) / denom)


def predict(model: ForestModel, X) -> np.ndarray:
    """Mean of per-tree leaf means, accumulated in fixed tree order.

    Rows on which every tree agrees return that value exactly (no division
    round-off), so a constant training target predicts the constant bit for
    bit.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimMismatch(
            f"X has {X.shape[1] if X.ndim == 2 else '?'} features, model expects {model.n_features}"
        )
    n = X.shape[0]
    out = np.zeros(n)
    lo = np.full(n, np.inf)
    hi = np.full(n, -np.inf)
    single = np.empty(n)
    for tree in model.trees:
        single[:] = 0.0
        _tree.predict_tree(tree.feature, tree.threshold, tree.left, tree.right,
                           tree.value, X, single)
        out += single
        np.minimum(lo, single, out=lo)
        np.maximum(hi, single, out=hi)
    out /= len(model.trees)
    return np.where(lo == hi, lo, out)


def tune_by_cv(X, y, grid, folds: int = 10, seed: int = 0,
               n_threads: int = 1):
    """Pick the grid config with the lowest mean K-fold squared error.

    Returns (best_config, scores) where scores[i] is the mean CV MSE of
    grid[i]. Ties resolve toward fewer trees, then the earlier grid index.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    assignment = kfold_split(X.shape[0], folds, seed)
    scores = []
    for config in grid:
        fold_mse = []
        for fold in range(folds):
            test = assignment.labels == fold
            train = ~test
            cfg = replace(config, seed=_tree_seed(config.seed, fold))
            model = fit_forest(X[train], y[train], cfg, n_threads=n_threads)
            pred = predict(model, X[test])
            fold_mse.append(float(np.mean((y[test] - pred) ** 2)))
        scores.append(float(np.mean(fold_mse)))
    order = sorted(range(len(grid)), key=lambda i: (scores[i], grid[i].n_trees, i))
    return grid[order[0]], scores


def forest_to_report(model: ForestModel) -> dict:
    """Debug dump of the fitted trees (format tag forest/1; not a stable API)."""
    return {
        "format": "forest/1",
        "config": {
            "n_trees": model.config.n_trees,
            "min_samples_split": model.config.min_samples_split,
            "min_samples_leaf": model.config.min_samples_leaf,
            "max_features": model.config.max_features,
            "max_depth": model.config.max_depth,
            "bootstrap": model.config.bootstrap,
            "seed": model.config.seed,
        },
        "n_features": model.n_features,
        "oob_score": model.oob_score,
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "value": tree.value.tolist(),
            }
            for tree in model.trees
        ],
    }
