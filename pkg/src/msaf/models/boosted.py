"""Gradient-boosted trees with second-order (Newton) objectives.

Multiclass boosting with a softmax cross-entropy loss: each round fits
one regression tree per class on that class's gradient g = p - 1[y=c]
and hessian h = p(1-p). Leaf weights are -G/(H+lambda); a split is kept
only when 1/2 [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)]
exceeds the per-leaf penalty gamma. Scores start from the log class
prior, rounds add learning_rate times the leaf weight, and early
stopping watches the cross-entropy of a held-out tail of a seeded
shuffle, truncating the model to its best round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ShapeMismatch, TooFewSamplesForValidation
from ._common import validate_x, validate_xy


@dataclass
class GbNode:
    """Internal node (feature >= 0) or leaf (weight)."""

    feature: int = -1
    threshold: float = 0.0
    left: Optional["GbNode"] = None
    right: Optional["GbNode"] = None
    weight: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_json_dict(self) -> dict:
        if self.is_leaf:
            return {"weight": self.weight}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_json_dict(),
            "right": self.right.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GbNode":
        if "weight" in d:
            return cls(weight=float(d["weight"]))
        return cls(
            feature=int(d["feature"]),
            threshold=float(d["threshold"]),
            left=cls.from_json_dict(d["left"]),
            right=cls.from_json_dict(d["right"]),
        )


def _softmax(margins: np.ndarray) -> np.ndarray:
    z = margins - margins.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _leaf_weight(g_sum: float, h_sum: float, lam: float) -> float:
    return -g_sum / max(h_sum + lam, 1e-12)


def _score_term(g_sum: float, h_sum: float, lam: float) -> float:
    return g_sum * g_sum / max(h_sum + lam, 1e-12)


def _grow(x, g, h, rows, depth, max_depth, lam, gamma_leaf):
    g_total = float(g[rows].sum())
    h_total = float(h[rows].sum())
    if depth >= max_depth or rows.size < 2:
        return GbNode(weight=_leaf_weight(g_total, h_total, lam))
    parent_term = _score_term(g_total, h_total, lam)
    best_gain, best_feature, best_threshold = 0.0, -1, 0.0
    for f in range(x.shape[1]):
        vals = x[rows, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sg = g[rows][order]
        sh = h[rows][order]
        gl = hl = 0.0
        for pos in range(rows.size - 1):
            gl += float(sg[pos])
            hl += float(sh[pos])
            if sv[pos + 1] == sv[pos]:
                continue
            gain = 0.5 * (
                _score_term(gl, hl, lam)
                + _score_term(g_total - gl, h_total - hl, lam)
                - parent_term
            ) - gamma_leaf
            if gain > best_gain + 1e-15:
                best_gain, best_feature = gain, int(f)
                best_threshold = float((sv[pos] + sv[pos + 1]) / 2.0)
    if best_feature < 0:
        return GbNode(weight=_leaf_weight(g_total, h_total, lam))
    go_left = x[rows, best_feature] <= best_threshold
    return GbNode(
        feature=best_feature,
        threshold=best_threshold,
        left=_grow(x, g, h, rows[go_left], depth + 1, max_depth, lam, gamma_leaf),
        right=_grow(x, g, h, rows[~go_left], depth + 1, max_depth, lam, gamma_leaf),
    )


def _tree_outputs(node: GbNode, x: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        cur = node
        while not cur.is_leaf:
            cur = cur.left if x[i, cur.feature] <= cur.threshold else cur.right
        out[i] = cur.weight
    return out


@dataclass(frozen=True)
class GbtModel:
    """Boosted ensemble; trees[r][c] is round r's tree for class c."""

    classes: tuple[int, ...]
    n_features: int
    base_scores: np.ndarray
    learning_rate: float
    trees: tuple[tuple[GbNode, ...], ...]
    best_round: int
    train_loss_trace: tuple[float, ...] = ()
    valid_loss_trace: tuple[float, ...] = ()
    params: dict = field(default_factory=dict)

    def margins(self, x) -> np.ndarray:
        """Pre-softmax additive scores, (n, n_classes)."""
        x = validate_x(x, self.n_features)
        out = np.tile(self.base_scores, (x.shape[0], 1))
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                out[:, c] += self.learning_rate * _tree_outputs(tree, x)
        return out

    def decision_scores(self, x) -> np.ndarray:
        """Softmax class probabilities."""
        return _softmax(self.margins(x))

    def predict(self, x) -> np.ndarray:
        return np.asarray(self.classes)[np.argmax(self.margins(x), axis=1)]

    def to_json_dict(self) -> dict:
        return {
            "kind": "gbt",
            "classes": list(self.classes),
            "n_features": self.n_features,
            "base_scores": [float(v) for v in self.base_scores],
            "learning_rate": self.learning_rate,
            "best_round": self.best_round,
            "train_loss_trace": [float(v) for v in self.train_loss_trace],
            "valid_loss_trace": [float(v) for v in self.valid_loss_trace],
            "params": self.params,
            "trees": [[t.to_json_dict() for t in row] for row in self.trees],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GbtModel":
        return cls(
            classes=tuple(int(c) for c in d["classes"]),
            n_features=int(d["n_features"]),
            base_scores=np.asarray(d["base_scores"], dtype=np.float64),
            learning_rate=float(d["learning_rate"]),
            trees=tuple(
                tuple(GbNode.from_json_dict(t) for t in row) for row in d["trees"]
            ),
            best_round=int(d["best_round"]),
            train_loss_trace=tuple(d.get("train_loss_trace", ())),
            valid_loss_trace=tuple(d.get("valid_loss_trace", ())),
            params=dict(d.get("params", {})),
        )


def _cross_entropy(probs: np.ndarray, y_idx: np.ndarray) -> float:
    picked = np.clip(probs[np.arange(y_idx.size), y_idx], 1e-300, None)
    return float(-np.mean(np.log(picked)))


def train_gbt(
    x,
    y,
    n_rounds: int = 100,
    learning_rate: float = 0.05,
    max_depth: int = 3,
    lam: float = 1.0,
    gamma_leaf: float = 0.0,
    valid_fraction: float = 0.2,
    patience: int = 10,
    seed: int = 0,
) -> GbtModel:
    """Train a softmax gradient-boosted tree ensemble.

    Early stopping is active when valid_fraction > 0 and patience > 0:
    the last round(n * valid_fraction) rows of a seeded shuffle form the
    validation split, training stops once the validation cross-entropy
    has not improved for `patience` rounds, and the returned model is
    truncated to the best round. Base scores are the log class priors
    of the full input.

    Raises:
        TooFewSamplesForValidation: early stopping requested with n < 4.
    """
    x, y, classes = validate_xy(x, y)
    n, d = x.shape
    if n_rounds < 1 or max_depth < 1:
        raise ShapeMismatch("n_rounds and max_depth must be >= 1")
    if lam < 0 or gamma_leaf < 0 or learning_rate <= 0:
        raise ShapeMismatch("need lam >= 0, gamma_leaf >= 0, learning_rate > 0")
    index_of = {cls: i for i, cls in enumerate(classes)}
    y_idx = np.array([index_of[int(v)] for v in y], dtype=np.int64)
    n_classes = len(classes)

    early_stopping = valid_fraction > 0.0 and patience > 0
    if early_stopping:
        if n < 4:
            raise TooFewSamplesForValidation(
                f"early stopping needs n >= 4, got {n}; set valid_fraction=0"
            )
        perm = np.random.default_rng([seed]).permutation(n)
        n_valid = min(max(1, round(n * valid_fraction)), n - 2)
        train_rows, valid_rows = perm[:-n_valid], perm[-n_valid:]
    else:
        train_rows, valid_rows = np.arange(n), np.arange(0)

    priors = np.bincount(y_idx, minlength=n_classes) / n
    base = np.log(np.clip(priors, 1e-12, None))
    margins = np.tile(base, (n, 1))
    all_trees: list[tuple[GbNode, ...]] = []
    train_trace: list[float] = []
    valid_trace: list[float] = []
    best_loss, best_round, since_best = np.inf, 0, 0

    for _ in range(n_rounds):
        probs = _softmax(margins)
        round_trees = []
        for c in range(n_classes):
            g = probs[:, c] - (y_idx == c)
            h = probs[:, c] * (1.0 - probs[:, c])
            tree = _grow(x, g, h, train_rows, 0, max_depth, lam, gamma_leaf)
            round_trees.append(tree)
            margins[:, c] += learning_rate * _tree_outputs(tree, x)
        all_trees.append(tuple(round_trees))
        probs = _softmax(margins)
        train_trace.append(_cross_entropy(probs[train_rows], y_idx[train_rows]))
        if early_stopping:
            v_loss = _cross_entropy(probs[valid_rows], y_idx[valid_rows])
            valid_trace.append(v_loss)
            if v_loss < best_loss - 1e-12:
                best_loss, best_round, since_best = v_loss, len(all_trees), 0
            else:
                since_best += 1
                if since_best >= patience:
                    break
        else:
            best_round = len(all_trees)

    if early_stopping and best_round == 0:
        best_round = 1
    return GbtModel(
        classes=classes,
        n_features=d,
        base_scores=base,
        learning_rate=float(learning_rate),
        trees=tuple(all_trees[:best_round]),
        best_round=best_round,
        train_loss_trace=tuple(train_trace),
        valid_loss_trace=tuple(valid_trace),
        params={
            "n_rounds": n_rounds,
            "learning_rate": learning_rate,
            "max_depth": max_depth,
            "lam": lam,
            "gamma_leaf": gamma_leaf,
            "valid_fraction": valid_fraction,
            "patience": patience,
            "seed": seed,
        },
    )
