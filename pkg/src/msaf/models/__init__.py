"""Classifiers, metrics, and model selection.

Three from-scratch classifiers share a minimal interface: a trainer
function, `predict(x) -> class labels`, and `decision_scores(x) ->
(n, n_classes)` scores. `train_model` dispatches on the kind string
used throughout configs and the CLI.
"""
from __future__ import annotations

from typing import Callable, Union

from ..errors import UnsupportedModel
from .boosted import GbtModel, train_gbt
from .evaluate import (
    DEFAULT_GRIDS,
    EvalReport,
    GridSearchResult,
    evaluate,
    grid_search,
    stratified_fold_indices,
    stratified_kfold_cv,
)
from .forest import RfModel, train_rf
from .svm import SvmModel, train_svm_ovr

TrainedModel = Union[SvmModel, RfModel, GbtModel]

_TRAINERS: dict[str, Callable] = {
    "svm": train_svm_ovr,
    "rf": train_rf,
    "gbt": train_gbt,
}

MODEL_KINDS = tuple(sorted(_TRAINERS))


def train_model(kind: str, x, y, params: dict | None = None, seed: int = 0) -> TrainedModel:
    """Train a classifier by kind name ("svm", "rf", "gbt")."""
    if kind not in _TRAINERS:
        raise UnsupportedModel(f"unknown model kind {kind!r}, expected {MODEL_KINDS}")
    return _TRAINERS[kind](x, y, **(params or {}), seed=seed)


def make_trainer(kind: str, params: dict | None = None) -> Callable:
    """Build a (x, y, seed) -> model callable for cross-validation."""
    if kind not in _TRAINERS:
        raise UnsupportedModel(f"unknown model kind {kind!r}, expected {MODEL_KINDS}")
    fixed = dict(params or {})

    def trainer(x, y, seed):
        return _TRAINERS[kind](x, y, **fixed, seed=seed)

    return trainer


def model_to_json_dict(model: TrainedModel) -> dict:
    return model.to_json_dict()


def model_from_json_dict(d: dict) -> TrainedModel:
    kind = d.get("kind")
    if kind == "svm":
        return SvmModel.from_json_dict(d)
    if kind == "rf":
        return RfModel.from_json_dict(d)
    if kind == "gbt":
        return GbtModel.from_json_dict(d)
    raise UnsupportedModel(f"cannot deserialize model kind {kind!r}")


__all__ = [
    "DEFAULT_GRIDS",
    "EvalReport",
    "GbtModel",
    "GridSearchResult",
    "MODEL_KINDS",
    "RfModel",
    "SvmModel",
    "TrainedModel",
    "evaluate",
    "grid_search",
    "make_trainer",
    "model_from_json_dict",
    "model_to_json_dict",
    "stratified_fold_indices",
    "stratified_kfold_cv",
    "train_gbt",
    "train_model",
    "train_rf",
    "train_svm_ovr",
]
