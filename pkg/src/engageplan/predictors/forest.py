"""CART trees with Gini splits and a bootstrap random forest."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..seeding import child_seed


@dataclass
class ForestConfig:
    n_trees: int = 200
    max_depth: int = 30
    min_samples_split: int = 2
    features_per_split: int | str = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        f = self.features_per_split
        if isinstance(f, str) and f not in ("sqrt", "all") or isinstance(f, int) and f < 1:
            raise ValueError("features_per_split must be 'sqrt', 'all' or a positive integer")

    def n_split_features(self, n_features: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        if self.features_per_split in ("all", None):
            return n_features
        return max(1, min(int(self.features_per_split), n_features))


def _best_split(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float] | None:
    """Lowest weighted Gini split of one feature: (impurity, threshold)."""
    order = np.argsort(xs, kind="stable")
    xs, ys = xs[order], ys[order]
    n = len(xs)
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    n_left = np.arange(1, n)
    pos_left = np.cumsum(ys)[:-1]
    n_right = n - n_left
    pos_right = ys.sum() - pos_left
    impurity = (
        2 * pos_left * (n_left - pos_left) / n_left + 2 * pos_right * (n_right - pos_right) / n_right
    ) / n
    impurity = np.where(valid, impurity, np.inf)
    i = int(np.argmin(impurity))
    return float(impurity[i]), float(0.5 * (xs[i] + xs[i + 1]))


class DecisionTree:
    """Binary tree in flat arrays; ``feature == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, counts):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64).reshape(-1, 2)

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def leaf_index(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = x[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        c = self.counts[self.leaf_index(np.asarray(x, dtype=float))]
        return c[:, 1] / c.sum(axis=1)


def train_tree(x, y, config: ForestConfig, rng: np.random.Generator) -> DecisionTree:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("cannot train a tree on zero samples")
    n_feat = x.shape[1]
    m = config.n_split_features(n_feat)
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=2)[:2])
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        c = counts[node]
        if depth >= config.max_depth or len(idx) < config.min_samples_split or c.min() == 0:
            continue
        best = None
        for f in rng.choice(n_feat, size=m, replace=False):
            res = _best_split(x[idx, f], y[idx])
            if res is not None and (best is None or res[0] < best[0]):
                best = (res[0], res[1], int(f))
        if best is None:
            continue
        _, thr, f = best
        mask = x[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return DecisionTree(feature, threshold, left, right, counts)


class RandomForest:
    kind = "forest"

    def __init__(self, config: ForestConfig | None = None, trees: list[DecisionTree] | None = None):
        self.config = config or ForestConfig()
        self.trees = trees or []

    def fit(self, data) -> "RandomForest":
        x, y = _xy(data)
        if len(y) == 0:
            raise ValueError("cannot train a forest on zero samples")
        self.trees = []
        for t in range(self.config.n_trees):
            rng = np.random.default_rng(child_seed(self.config.seed, "tree", t))
            boot = rng.integers(0, len(y), size=len(y))
            self.trees.append(train_tree(x[boot], y[boot], self.config, rng))
        return self

    def tree_probas(self, data) -> np.ndarray:
        x = np.asarray(data, dtype=float) if isinstance(data, np.ndarray) else data.flat()
        return np.array([t.predict_proba(x) for t in self.trees])

    def predict_proba(self, data) -> np.ndarray:
        return self.tree_probas(data).mean(axis=0)

    def meta(self) -> dict:
        return {"config": asdict(self.config), "tree_sizes": [len(t.feature) for t in self.trees]}

    def arrays(self) -> dict:
        cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees])  # noqa: E731
        return {k: cat(k) for k in ("feature", "threshold", "left", "right", "counts")}

    @classmethod
    def from_parts(cls, meta: dict, arrays: dict) -> "RandomForest":
        trees, start = [], 0
        for size in meta["tree_sizes"]:
            sl = slice(start, start + size)
            trees.append(DecisionTree(*(arrays[k][sl] for k in ("feature", "threshold", "left", "right", "counts"))))
            start += size
        return cls(ForestConfig(**meta["config"]), trees)


def _xy(data):
    if isinstance(data, tuple):
        x, y = data
    else:
        x, y = data.flat(), data.y
    return np.asarray(x, dtype=float), np.asarray(y, dtype=np.int64)
