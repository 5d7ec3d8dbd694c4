"""Additive feature attributions for the trained classifiers.

All three methods share the interventional value function: the value of
a coalition S is the model score with features in S taken from the
explained instance and the rest from a background row, averaged over
the background set. Scores are explained on each model's additive
scale: one-vs-rest decision values for the SVM, averaged leaf
histograms for the forest, pre-softmax margins for the boosted trees.
Every method satisfies local accuracy: phi0 + sum(phi) equals the score
of the explained instance.

Methods:

* exact    full subset enumeration, feasible to d = 20.
* kernel   weighted least squares on coalitions; enumerates all
           non-trivial coalitions when the budget allows, otherwise
           paired-complement sampling. The efficiency constraint is
           eliminated by substituting the last feature's attribution,
           never solved as an extra equation.
* tree     interventional TreeSHAP for the tree ensembles: for each
           (instance, background row) pair, each leaf induces a game
           that is an AND of "feature must come from x" / "must come
           from b" requirements, whose Shapley values have a closed
           form in the two requirement counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyBackground,
    NonFinite,
    ShapeMismatch,
    SingularSystem,
    TooManyFeatures,
    UnsupportedModel,
)
from .models import GbtModel, RfModel, SvmModel, TrainedModel

EXACT_FEATURE_LIMIT = 20


@dataclass(frozen=True)
class ShapExplanation:
    """Attributions for a batch of instances.

    Attributes:
        method: "exact", "kernel", or "tree".
        classes: Model output classes, column order of phi.
        phi0: (n_classes,) expected score over the background.
        phi: (n_instances, n_features, n_classes) attributions.
        feature_names: Optional column names.
        meta: Method details (background size, sampling budget, ridge
            fallback flag, ...).
    """

    method: str
    classes: tuple[int, ...]
    phi0: np.ndarray
    phi: np.ndarray
    feature_names: Optional[tuple[str, ...]] = None
    meta: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "classes": list(self.classes),
            "phi0": [float(v) for v in self.phi0],
            "phi": [
                [[float(v) for v in feat] for feat in inst] for inst in self.phi
            ],
            "feature_names": (
                list(self.feature_names) if self.feature_names else None
            ),
            "meta": dict(self.meta),
        }


@dataclass(frozen=True)
class GlobalRanking:
    """Features ordered by mean |attribution|, descending."""

    entries: tuple[tuple[str, float], ...]

    def to_json_dict(self) -> dict:
        return {"ranking": [{"feature": n, "score": float(s)} for n, s in self.entries]}


def _score_fn_for(model: TrainedModel) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(model, GbtModel):
        return model.margins
    if isinstance(model, (SvmModel, RfModel)):
        return model.decision_scores
    raise UnsupportedModel(f"cannot explain object of type {type(model).__name__}")


def _validate_inputs(model, x_explain, background):
    d = model.n_features
    x = np.asarray(x_explain, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    bg = np.asarray(background, dtype=np.float64)
    if bg.ndim == 1:
        bg = bg[np.newaxis, :]
    if bg.shape[0] < 1:
        raise EmptyBackground("background must contain at least one row")
    if x.ndim != 2 or bg.ndim != 2 or x.shape[1] != d or bg.shape[1] != d:
        raise DimensionMismatch(
            f"instances {x.shape} and background {bg.shape} must both have "
            f"{d} columns"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(bg))):
        raise NonFinite("explanation inputs contain non-finite values")
    return x, bg


def _coalition_values(
    score_fn, x_row: np.ndarray, background: np.ndarray, z: np.ndarray
) -> np.ndarray:
    """Mean interventional score per coalition row of z (m, d)."""
    m = z.shape[0]
    b = background.shape[0]
    out = None
    chunk = max(1, 65536 // max(b, 1))
    for start in range(0, m, chunk):
        zc = z[start : start + chunk]
        composite = np.where(
            zc.astype(bool)[:, np.newaxis, :],
            x_row[np.newaxis, np.newaxis, :],
            background[np.newaxis, :, :],
        )
        scores = score_fn(composite.reshape(zc.shape[0] * b, -1))
        scores = np.asarray(scores, dtype=np.float64).reshape(zc.shape[0], b, -1)
        vals = scores.mean(axis=1)
        out = vals if out is None else np.vstack([out, vals])
    return out


def exact_shapley(
    score_fn,
    x_row: np.ndarray,
    background: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact Shapley values by full subset enumeration.

    Returns (phi (d, C), phi0 (C,)). Cost grows as d * 2^d; refused
    beyond EXACT_FEATURE_LIMIT features.
    """
    d = x_row.size
    if d > EXACT_FEATURE_LIMIT:
        raise TooManyFeatures(
            f"exact enumeration supports d <= {EXACT_FEATURE_LIMIT}, got {d}"
        )
    n_masks = 1 << d
    bits = (np.arange(n_masks)[:, np.newaxis] >> np.arange(d)) & 1
    v = _coalition_values(score_fn, x_row, background, bits)
    popcount = bits.sum(axis=1)
    weights = np.array(
        [
            math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d)
            for s in range(d)
        ]
    )
    phi = np.zeros((d, v.shape[1]))
    masks = np.arange(n_masks)
    for i in range(d):
        without = (masks & (1 << i)) == 0
        idx = masks[without]
        w = weights[popcount[idx]]
        phi[i] = (v[idx | (1 << i)] - v[idx]).T @ w
    return phi, v[0].copy()


def _kernel_coalitions(d: int, n_samples: int, seed: int):
    """Coalition matrix and regression weights.

    Enumerates all 2^d - 2 non-trivial coalitions with the Shapley
    kernel weight when they fit the budget; otherwise samples coalition
    sizes from the kernel's size marginal and draws subsets paired with
    their complements, weighting by frequency.
    """
    total = (1 << d) - 2
    if total <= n_samples:
        masks = np.arange(1, (1 << d) - 1)
        z = ((masks[:, np.newaxis] >> np.arange(d)) & 1).astype(np.float64)
        sizes = z.sum(axis=1).astype(np.int64)
        w = np.array(
            [
                (d - 1) / (math.comb(d, s) * s * (d - s))
                for s in sizes
            ]
        )
        return z, w, True
    rng = np.random.default_rng([seed])
    sizes = np.arange(1, d)
    p = (d - 1) / (sizes * (d - sizes))
    p = p / p.sum()
    counts: dict[int, int] = {}
    drawn = 0
    while drawn < n_samples:
        s = int(rng.choice(sizes, p=p))
        members = rng.choice(d, size=s, replace=False)
        mask = 0
        for f in members:
            mask |= 1 << int(f)
        comp = mask ^ ((1 << d) - 1)
        for m in (mask, comp):
            counts[m] = counts.get(m, 0) + 1
            drawn += 1
    masks = np.array(list(counts.keys()))
    z = ((masks[:, np.newaxis] >> np.arange(d)) & 1).astype(np.float64)
    w = np.array([counts[int(m)] for m in masks], dtype=np.float64)
    return z, w, False


def kernel_shap(
    score_fn,
    x_row: np.ndarray,
    background: np.ndarray,
    n_samples: int = 2048,
    seed: int = 0,
    ridge: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """KernelSHAP attributions for one instance.

    Returns (phi (d, C), phi0 (C,), meta). The efficiency constraint is
    built in by substituting the last feature, so local accuracy holds
    for any coalition sample. On a singular normal system the solve is
    retried with ridge regularization ridge*I and flagged in meta.
    """
    d = x_row.size
    v0 = np.asarray(score_fn(background), dtype=np.float64).mean(axis=0)
    fx = np.asarray(score_fn(x_row[np.newaxis, :]), dtype=np.float64)[0]
    delta = fx - v0
    meta = {"n_background": int(background.shape[0]), "ridge_fallback": False}
    if d == 1:
        return delta[np.newaxis, :].copy(), v0, meta
    z, w, enumerated = _kernel_coalitions(d, n_samples, seed)
    meta["enumerated"] = bool(enumerated)
    meta["n_coalitions"] = int(z.shape[0])
    v = _coalition_values(score_fn, x_row, background, z)
    # substitute phi_{d-1} = delta - sum(others) into the weighted LS
    a = z[:, :-1] - z[:, -1:]
    t = v - v0[np.newaxis, :] - np.outer(z[:, -1], delta)
    aw = a * w[:, np.newaxis]
    lhs = aw.T @ a
    rhs = aw.T @ t
    try:
        sol = np.linalg.solve(lhs, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError:
        meta["ridge_fallback"] = True
        meta["ridge"] = ridge
        try:
            sol = np.linalg.solve(lhs + ridge * np.eye(d - 1), rhs)
        except np.linalg.LinAlgError as e:
            raise SingularSystem(
                f"kernel regression singular even with ridge {ridge}"
            ) from e
        if not np.all(np.isfinite(sol)):
            raise SingularSystem(f"kernel regression singular even with ridge {ridge}")
    phi = np.vstack([sol, delta - sol.sum(axis=0)])
    return phi, v0, meta


# --- interventional TreeSHAP ---


def _collect_leaves(node, bounds: dict, out: list, value_fn):
    if node.is_leaf:
        feats = np.array(sorted(bounds.keys()), dtype=np.int64)
        lo = np.array([bounds[f][0] for f in feats])
        hi = np.array([bounds[f][1] for f in feats])
        out.append((feats, lo, hi, value_fn(node)))
        return
    f = node.feature
    lo, hi = bounds.get(f, (-np.inf, np.inf))
    if lo < node.threshold:
        bounds[f] = (lo, min(hi, node.threshold))
        _collect_leaves(node.left, bounds, out, value_fn)
    if hi > node.threshold:
        bounds[f] = (max(lo, node.threshold), hi)
        _collect_leaves(node.right, bounds, out, value_fn)
    if lo == -np.inf and hi == np.inf:
        del bounds[f]
    else:
        bounds[f] = (lo, hi)


def _model_leaf_tables(model) -> tuple[list, np.ndarray]:
    """Per-tree leaf constraint tables and the constant score offset."""
    tables = []
    if isinstance(model, RfModel):
        n_classes = len(model.classes)
        n_trees = len(model.trees)

        def rf_value(leaf):
            total = leaf.counts.sum()
            if total <= 0:
                return np.zeros(n_classes)
            return leaf.counts / total / n_trees

        for tree in model.trees:
            leaves: list = []
            _collect_leaves(tree, {}, leaves, rf_value)
            tables.append(leaves)
        return tables, np.zeros(n_classes)
    if isinstance(model, GbtModel):
        n_classes = len(model.classes)
        lr = model.learning_rate
        for round_trees in model.trees:
            for c, tree in enumerate(round_trees):
                onehot = np.zeros(n_classes)
                onehot[c] = 1.0

                def gb_value(leaf, _onehot=onehot):
                    return _onehot * (lr * leaf.weight)

                leaves = []
                _collect_leaves(tree, {}, leaves, gb_value)
                tables.append(leaves)
        return tables, model.base_scores.copy()
    raise UnsupportedModel(
        f"tree explanations need a tree ensemble, got {type(model).__name__}"
    )


def _factorial_tables(max_n: int) -> tuple[np.ndarray, np.ndarray]:
    """W_in[a, c] = (a-1)! c! / (a+c)!; W_out[a, c] = a! (c-1)! / (a+c)!."""
    w_in = np.zeros((max_n + 1, max_n + 1))
    w_out = np.zeros((max_n + 1, max_n + 1))
    for a in range(max_n + 1):
        for c in range(max_n + 1):
            if a >= 1:
                w_in[a, c] = (
                    math.factorial(a - 1) * math.factorial(c) / math.factorial(a + c)
                )
            if c >= 1:
                w_out[a, c] = (
                    math.factorial(a) * math.factorial(c - 1) / math.factorial(a + c)
                )
    return w_in, w_out


def tree_shap(
    model, x_row: np.ndarray, background: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Interventional TreeSHAP for one instance.

    Exactly matches exact_shapley on the same background (up to float
    rounding) at a cost linear in leaves and background rows.
    """
    tables, offset = _model_leaf_tables(model)
    return _tree_shap_from_tables(
        tables, offset, model.n_features, len(model.classes), x_row, background
    )


def _tree_shap_from_tables(
    tables, offset, d, n_classes, x_row, background
) -> tuple[np.ndarray, np.ndarray]:
    b = background.shape[0]
    max_path = max(
        (len(leaf[0]) for leaves in tables for leaf in leaves), default=1
    )
    w_in, w_out = _factorial_tables(max(max_path, 1))
    phi = np.zeros((d, n_classes))
    phi0 = np.zeros(n_classes)
    for leaves in tables:
        for feats, lo, hi, value in leaves:
            if feats.size == 0:
                phi0 += value
                continue
            x_ok = (x_row[feats] > lo) & (x_row[feats] <= hi)
            b_ok = (background[:, feats].T > lo[:, np.newaxis]) & (
                background[:, feats].T <= hi[:, np.newaxis]
            )
            alive = ~np.any(~x_ok[:, np.newaxis] & ~b_ok, axis=0)
            if not alive.any():
                continue
            in_mask = x_ok[:, np.newaxis] & ~b_ok
            out_mask = ~x_ok[:, np.newaxis] & b_ok
            a_count = in_mask.sum(axis=0)
            c_count = out_mask.sum(axis=0)
            base_rows = alive & (a_count == 0)
            n_base = int(base_rows.sum())
            if n_base:
                phi0 += value * (n_base / b)
            win_rows = np.where(alive, w_in[a_count, c_count], 0.0)
            wout_rows = np.where(alive, w_out[a_count, c_count], 0.0)
            in_total = in_mask @ win_rows
            out_total = out_mask @ wout_rows
            contrib = (in_total - out_total) / b
            phi[feats] += np.outer(contrib, value)
    phi0 += offset
    return phi, phi0


def explain(
    model: TrainedModel,
    x_explain,
    background,
    method: str = "auto",
    n_samples: int = 2048,
    seed: int = 0,
    feature_names: Optional[Sequence[str]] = None,
) -> ShapExplanation:
    """Attribute model scores for a batch of instances.

    Args:
        model: A trained svm/rf/gbt model.
        x_explain: (n, d) instances to explain.
        background: (B, d) reference rows for the interventional
            expectation.
        method: "auto" (tree for ensembles, kernel otherwise),
            "exact", "kernel", or "tree".
        n_samples: Coalition budget for the kernel method.
        seed: Seed for kernel coalition sampling; instance i uses the
            child seed (seed, i).
        feature_names: Optional names, length d.
    """
    x, bg = _validate_inputs(model, x_explain, background)
    if method == "auto":
        method = "tree" if isinstance(model, (RfModel, GbtModel)) else "kernel"
    if method not in ("exact", "kernel", "tree"):
        raise ShapeMismatch(f"unknown explanation method {method!r}")
    if feature_names is not None and len(feature_names) != x.shape[1]:
        raise DimensionMismatch(
            f"{len(feature_names)} feature names for {x.shape[1]} features"
        )
    n, d = x.shape
    n_classes = len(model.classes)
    phi = np.empty((n, d, n_classes))
    meta: dict = {"n_background": int(bg.shape[0])}
    phi0 = None
    if method == "tree":
        tables, offset = _model_leaf_tables(model)
        for i in range(n):
            phi[i], phi0 = _tree_shap_from_tables(
                tables, offset, d, n_classes, x[i], bg
            )
    elif method == "exact":
        score_fn = _score_fn_for(model)
        for i in range(n):
            phi[i], phi0 = exact_shapley(score_fn, x[i], bg)
    else:
        score_fn = _score_fn_for(model)
        meta["n_samples"] = int(n_samples)
        any_ridge = False
        for i in range(n):
            phi[i], phi0, m = kernel_shap(
                score_fn, x[i], bg, n_samples=n_samples, seed=_child(seed, i)
            )
            any_ridge = any_ridge or m.get("ridge_fallback", False)
            meta["enumerated"] = m.get("enumerated")
        meta["ridge_fallback"] = any_ridge
    return ShapExplanation(
        method=method,
        classes=tuple(model.classes),
        phi0=np.asarray(phi0, dtype=np.float64),
        phi=phi,
        feature_names=(tuple(feature_names) if feature_names else None),
        meta=meta,
    )


def _child(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def global_ranking(
    explanation: ShapExplanation, class_index: Optional[int] = None
) -> GlobalRanking:
    """Rank features by mean |phi| over instances (and classes).

    Ties keep the original feature order.
    """
    mag = np.abs(explanation.phi)
    if class_index is not None:
        if not 0 <= class_index < mag.shape[2]:
            raise ShapeMismatch(f"class index {class_index} out of range")
        scores = mag[:, :, class_index].mean(axis=0)
    else:
        scores = mag.mean(axis=(0, 2))
    names = explanation.feature_names or tuple(
        f"x{i}" for i in range(scores.size)
    )
    order = sorted(range(scores.size), key=lambda i: (-scores[i], i))
    return GlobalRanking(entries=tuple((names[i], float(scores[i])) for i in order))
