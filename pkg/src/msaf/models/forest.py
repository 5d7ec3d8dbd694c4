"""Random forest with Gini-gain axis-aligned splits.

Each tree trains on a bootstrap resample (optional), each split
considers ceil(sqrt(d)) features drawn without replacement (optional
override), and candidate thresholds are midpoints between consecutive
distinct sorted values. Leaves keep raw class histograms; prediction
averages the normalized leaf histograms over trees, so the returned
class scores sum to one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ShapeMismatch
from ._common import child_seed, validate_x, validate_xy


@dataclass
class RfNode:
    """Internal node (feature >= 0) or leaf (counts set)."""

    feature: int = -1
    threshold: float = 0.0
    left: Optional["RfNode"] = None
    right: Optional["RfNode"] = None
    counts: Optional[np.ndarray] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_json_dict(self) -> dict:
        if self.is_leaf:
            return {"counts": [int(v) for v in self.counts]}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_json_dict(),
            "right": self.right.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RfNode":
        if "counts" in d:
            return cls(counts=np.asarray(d["counts"], dtype=np.float64))
        return cls(
            feature=int(d["feature"]),
            threshold=float(d["threshold"]),
            left=cls.from_json_dict(d["left"]),
            right=cls.from_json_dict(d["right"]),
        )


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n <= 0:
        return 0.0
    p = counts / n
    return float(1.0 - p @ p)


def _best_split(x, y_idx, rows, n_classes, mtry, rng):
    """Best (gain, feature, threshold) over a random feature subset."""
    d = x.shape[1]
    feats = np.sort(rng.choice(d, size=mtry, replace=False))
    parent_counts = np.bincount(y_idx[rows], minlength=n_classes).astype(np.float64)
    n = rows.size
    parent_impurity = _gini(parent_counts)
    best = (0.0, -1, 0.0)
    for f in feats:
        vals = x[rows, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sy = y_idx[rows][order]
        left = np.zeros(n_classes)
        right = parent_counts.copy()
        for pos in range(n - 1):
            left[sy[pos]] += 1.0
            right[sy[pos]] -= 1.0
            if sv[pos + 1] == sv[pos]:
                continue
            n_left = pos + 1
            gain = parent_impurity - (
                n_left * _gini(left) + (n - n_left) * _gini(right)
            ) / n
            if gain > best[0] + 1e-15:
                best = (gain, int(f), float((sv[pos] + sv[pos + 1]) / 2.0))
    return best


def _grow(x, y_idx, rows, n_classes, depth, max_depth, min_samples_split, mtry, rng):
    counts = np.bincount(y_idx[rows], minlength=n_classes).astype(np.float64)
    if (
        rows.size < min_samples_split
        or (max_depth is not None and depth >= max_depth)
        or np.count_nonzero(counts) <= 1
    ):
        return RfNode(counts=counts)
    gain, feature, threshold = _best_split(x, y_idx, rows, n_classes, mtry, rng)
    if feature < 0 or gain <= 0.0:
        return RfNode(counts=counts)
    go_left = x[rows, feature] <= threshold
    left = _grow(
        x, y_idx, rows[go_left], n_classes, depth + 1, max_depth,
        min_samples_split, mtry, rng,
    )
    right = _grow(
        x, y_idx, rows[~go_left], n_classes, depth + 1, max_depth,
        min_samples_split, mtry, rng,
    )
    return RfNode(feature=feature, threshold=threshold, left=left, right=right)


def _leaf_for(node: RfNode, row: np.ndarray) -> RfNode:
    while not node.is_leaf:
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node


@dataclass(frozen=True)
class RfModel:
    """Trained forest; scores are averaged normalized leaf histograms."""

    classes: tuple[int, ...]
    n_features: int
    trees: tuple[RfNode, ...]
    params: dict = field(default_factory=dict)

    def decision_scores(self, x) -> np.ndarray:
        x = validate_x(x, self.n_features)
        out = np.zeros((x.shape[0], len(self.classes)))
        for i in range(x.shape[0]):
            for tree in self.trees:
                leaf = _leaf_for(tree, x[i])
                total = leaf.counts.sum()
                if total > 0:
                    out[i] += leaf.counts / total
        return out / len(self.trees)

    def predict(self, x) -> np.ndarray:
        return np.asarray(self.classes)[np.argmax(self.decision_scores(x), axis=1)]

    def to_json_dict(self) -> dict:
        return {
            "kind": "rf",
            "classes": list(self.classes),
            "n_features": self.n_features,
            "params": self.params,
            "trees": [t.to_json_dict() for t in self.trees],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RfModel":
        return cls(
            classes=tuple(int(c) for c in d["classes"]),
            n_features=int(d["n_features"]),
            trees=tuple(RfNode.from_json_dict(t) for t in d["trees"]),
            params=dict(d.get("params", {})),
        )


def train_rf(
    x,
    y,
    n_trees: int = 100,
    max_depth: Optional[int] = 10,
    min_samples_split: int = 2,
    seed: int = 0,
    bootstrap: bool = True,
    n_features_per_split: Optional[int] = None,
) -> RfModel:
    """Train a random forest.

    Args:
        x: (n, d) feature matrix.
        y: (n,) integer class labels, at least two distinct.
        n_trees: Number of trees.
        max_depth: Depth cap, None for unlimited.
        min_samples_split: Smallest node that may still split.
        seed: Master seed; tree t derives its own child seed.
        bootstrap: Resample n rows with replacement per tree.
        n_features_per_split: Features considered per split; defaults
            to ceil(sqrt(d)).
    """
    x, y, classes = validate_xy(x, y)
    n, d = x.shape
    if n_trees < 1:
        raise ShapeMismatch(f"n_trees must be >= 1, got {n_trees}")
    mtry = n_features_per_split if n_features_per_split else math.ceil(math.sqrt(d))
    if not 1 <= mtry <= d:
        raise ShapeMismatch(f"features per split must be in [1, {d}], got {mtry}")
    index_of = {cls: i for i, cls in enumerate(classes)}
    y_idx = np.array([index_of[int(v)] for v in y], dtype=np.int64)
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(child_seed(seed, t))
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(
            _grow(
                x, y_idx, rows, len(classes), 0, max_depth,
                max(2, min_samples_split), mtry, rng,
            )
        )
    return RfModel(
        classes=classes,
        n_features=d,
        trees=tuple(trees),
        params={
            "n_trees": n_trees,
            "max_depth": max_depth,
            "min_samples_split": min_samples_split,
            "seed": seed,
            "bootstrap": bootstrap,
            "n_features_per_split": n_features_per_split,
        },
    )
