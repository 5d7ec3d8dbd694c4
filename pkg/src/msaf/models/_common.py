"""Shared input validation and seed derivation for the classifiers."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch, LengthMismatch, NonFinite, SingleClass


def validate_xy(x, y) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
    """Check a training pair and return (x, y, sorted distinct classes)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64).ravel()
    if x.ndim != 2 or x.shape[0] < 1:
        raise DimensionMismatch(f"x must be a non-empty (n, d) matrix, got {x.shape}")
    if x.shape[0] != y.shape[0]:
        raise LengthMismatch(f"{x.shape[0]} rows but {y.shape[0]} labels")
    if not np.all(np.isfinite(x)):
        raise NonFinite("training features contain non-finite values")
    classes = tuple(int(c) for c in np.unique(y))
    if len(classes) < 2:
        raise SingleClass(f"training labels contain {len(classes)} class(es)")
    return x, y, classes


def validate_x(x, n_features: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != n_features:
        raise DimensionMismatch(
            f"expected (n, {n_features}) features, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise NonFinite("features contain non-finite values")
    return x


def child_seed(*parts: int) -> int:
    """Deterministic child seed from a (master seed, branch...) tuple."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])
