"""Bagged CART regression forest.

The same trainer backs both the rule learner (leaf parameter ``l``) and the
surrogate performance model (``l = 1``, fully grown).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .space import SampleSet

DEFAULT_TREES = 100


class InsufficientDataError(ValueError):
    pass


class Split(NamedTuple):
    """One predicate on a root-to-leaf path.

    Numeric splits read ``x < value``; categorical splits read ``x == value``.
    ``holds`` is False on the right branch, where the predicate is negated.
    """

    option: int
    categorical: bool
    value: float
    holds: bool

    def __str__(self):
        if self.categorical:
            return f"x{self.option}{'==' if self.holds else '!='}{int(self.value)}"
        return f"x{self.option}{'<' if self.holds else '>='}{self.value:g}"


@dataclass(frozen=True)
class RegressionForest:
    """Flat node arrays for all trees; ``roots[t]`` is the root node of tree t."""

    feature: np.ndarray
    is_cat: np.ndarray
    value: np.ndarray
    left: np.ndarray
    right: np.ndarray
    pred: np.ndarray
    count: np.ndarray
    roots: np.ndarray
    leaf_param: int
    n_options: int

    @property
    def tree_count(self) -> int:
        return int(self.roots.size)

    def leaf_counts(self) -> np.ndarray:
        """Number of leaves per tree."""
        ends = np.append(self.roots[1:], self.feature.size)
        is_leaf = self.feature < 0
        return np.array([int(is_leaf[a:b].sum()) for a, b in zip(self.roots, ends)])

    def predict_all(self, X) -> np.ndarray:
        """Per-tree predictions, shape ``(tree_count, len(X))``."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, np.int64)))
        if X.shape[0] == 0:
            return np.empty((self.tree_count, 0))
        return _kernels.predict_trees(
            self.feature, self.is_cat, self.value, self.left, self.right, self.pred, self.roots, X
        )

    def predict_many(self, X) -> tuple[np.ndarray, np.ndarray]:
        per_tree = self.predict_all(X)
        return per_tree.mean(axis=0), per_tree.std(axis=0)

    def predict(self, config) -> tuple[float, float]:
        mean, std = self.predict_many([config])
        return float(mean[0]), float(std[0])


def _tree_seeds(seed, tree_count: int) -> list:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(tree_count)


def train_arrays(X, y, kinds, l: int = 1, tree_count: int = DEFAULT_TREES, seed=0, n_jobs: int = 1,
                 bootstrap: bool = True) -> RegressionForest:
    X = np.ascontiguousarray(X, np.int64)
    y = np.ascontiguousarray(y, np.float64)
    kinds = np.ascontiguousarray(kinds, np.int8)
    n = X.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples to train, got {n}")
    if l < 1:
        raise ValueError("leaf parameter l must be >= 1")
    if not np.all(np.isfinite(y)):
        raise ValueError("training targets must be finite")
    seeds = _tree_seeds(seed, tree_count)
    if bootstrap:
        R = np.stack([np.random.default_rng(ss).integers(0, n, size=n) for ss in seeds]).astype(np.int64)
    else:
        R = np.tile(np.arange(n, dtype=np.int64), (tree_count, 1))

    def grow(chunk):
        return _kernels.grow_forest(X, y, np.ascontiguousarray(R[chunk]), kinds, int(l))

    # contiguous blocks of trees per worker; the merged forest does not depend on the split
    chunks = [c for c in np.array_split(np.arange(tree_count), max(1, min(n_jobs, tree_count))) if c.size]
    if len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(grow, chunks))
    else:
        parts = [grow(chunks[0])]

    base = np.cumsum([0] + [p[0].size for p in parts])[:-1]
    cols = [np.concatenate([p[c] for p in parts]) for c in range(7)]
    roots = np.concatenate([p[7] + b for p, b in zip(parts, base)]).astype(np.int64)
    offs = np.concatenate([np.full(p[0].size, b, np.int64) for p, b in zip(parts, base)])
    left = np.where(cols[3] >= 0, cols[3] + offs, -1)
    right = np.where(cols[4] >= 0, cols[4] + offs, -1)
    # a training set smaller than l can only form a single undersized leaf
    assert cols[6][cols[0] < 0].min() >= min(l, n), "leaf below minimum size"
    return RegressionForest(cols[0], cols[1], cols[2], left, right, cols[5], cols[6], roots, int(l), X.shape[1])


def train(samples: SampleSet, l: int = 1, tree_count: int = DEFAULT_TREES, seed=0, n_jobs: int = 1) -> RegressionForest:
    """Grow a forest on the finite measurements of ``samples``.

    Every tree sees a bootstrap resample. A node becomes a leaf when it holds
    fewer than ``2*l`` rows, when its targets are all equal, or when no split
    lowers the squared error; every leaf therefore holds at least ``l`` rows.
    Per-tree RNG streams are spawned from ``seed``, so ``n_jobs`` never
    changes the result.
    """
    X, y = samples.arrays()
    return train_arrays(X, y, samples.space.kinds, l, tree_count, seed, n_jobs)


def predict(forest: RegressionForest, config) -> tuple[float, float]:
    """Mean and population standard deviation of the per-tree predictions."""
    return forest.predict(config)


def extract_paths(forest: RegressionForest) -> list[list[Split]]:
    """Root-to-leaf predicate sequences, one per leaf, left branches first."""
    paths = []
    feat, cat, val, left, right = forest.feature, forest.is_cat, forest.value, forest.left, forest.right
    for root in forest.roots:
        stack = [(int(root), [])]
        while stack:
            node, path = stack.pop()
            f = feat[node]
            if f < 0:
                paths.append(path)
                continue
            c = bool(cat[node])
            v = float(val[node])
            stack.append((int(right[node]), path + [Split(int(f), c, v, False)]))
            stack.append((int(left[node]), path + [Split(int(f), c, v, True)]))
    return paths

