"""The five classifier families behind one fit/predict_proba surface.

Families and their searched parameters (everything else is fixed):

    knn  k in {1, 3, 5, 7, 9}
    svm  C in {0.01, 0.1, 1, 10, 20, 100}, RBF kernel, variance-scaled gamma
    rf / et / gb
         n_estimators in {100, 200, 500, 700, 1000, 1200}
         min_samples_split in {0.005, 0.01, 0.1} (fraction of the training set)

knn and svm operate on standardize+min-max scaled features; the scaler is
fitted inside `fit` on the training data only and travels with the model.
Tree families consume raw features.  gb additionally trains each stage on a
0.95 subsample with learning rate 0.1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..errors import InputError, TrainingError
from .knn import KnnModel, fit_knn
from .scaler import ScalerParams, apply_scaler, fit_scaler
from .svm import SvmModel, fit_svm
from .trees import (
    GB_SUBSAMPLE,
    ForestModel,
    GbModel,
    fit_forest,
    fit_gradient_boosting,
)

FAMILIES = ("knn", "svm", "rf", "et", "gb")
SCALED_FAMILIES = ("knn", "svm")
TREE_FAMILIES = ("rf", "et", "gb")

KNN_K_GRID = (1, 3, 5, 7, 9)
SVM_C_GRID = (0.01, 0.1, 1.0, 10.0, 20.0, 100.0)
TREE_N_ESTIMATORS_GRID = (100, 200, 500, 700, 1000, 1200)
TREE_MIN_SPLIT_GRID = (0.005, 0.01, 0.1)


def parameter_grid(family: str) -> list[dict]:
    """Canonical enumeration of the family's search space."""
    if family == "knn":
        return [{"k": k} for k in KNN_K_GRID]
    if family == "svm":
        return [{"C": c} for c in SVM_C_GRID]
    if family in TREE_FAMILIES:
        return [
            {"n_estimators": n, "min_samples_split": f}
            for n in TREE_N_ESTIMATORS_GRID
            for f in TREE_MIN_SPLIT_GRID
        ]
    raise ValueError(f"unknown family {family!r}")


def grid_size(family: str) -> int:
    return len(parameter_grid(family))


def params_key(family: str, params: Mapping) -> str:
    """Stable string form of a grid point, used in seeds and ledger rows."""
    if family == "knn":
        return f"k={params['k']}"
    if family == "svm":
        return f"C={params['C']}"
    if family in TREE_FAMILIES:
        return f"n_estimators={params['n_estimators']},min_samples_split={params['min_samples_split']}"
    raise ValueError(f"unknown family {family!r}")


def complexity_key(family: str, params: Mapping) -> tuple:
    """Sort key under which smaller means a less complex model.

    Trees order by estimator count first, then by a *larger* split fraction
    (bigger minimum split means shallower trees).
    """
    if family == "knn":
        return (params["k"],)
    if family == "svm":
        return (params["C"],)
    if family in TREE_FAMILIES:
        return (params["n_estimators"], -params["min_samples_split"])
    raise ValueError(f"unknown family {family!r}")


@dataclass(frozen=True)
class ClassifierSpec:
    family: str
    params: dict
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")

    @property
    def key(self) -> str:
        return params_key(self.family, self.params)


@dataclass(frozen=True)
class TrainedModel:
    spec: ClassifierSpec
    scaler: ScalerParams | None
    model: KnnModel | SvmModel | ForestModel | GbModel

    @property
    def n_features(self) -> int:
        return self.model.n_features


def _validate_training_input(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise InputError("X must be 2-D with one label per row")
    if not np.isfinite(x).all():
        raise InputError("training matrix contains non-finite values")
    classes = np.unique(y)
    if not np.array_equal(classes, [0, 1]):
        if classes.size < 2:
            raise TrainingError("training labels contain a single class")
        raise TrainingError("labels must be 0 (impostor) / 1 (genuine)")
    return x, y.astype(np.int64)


def fit(spec: ClassifierSpec, x: np.ndarray, y: np.ndarray) -> TrainedModel:
    """Train one classifier; the returned model is immutable and picklable."""
    x, y = _validate_training_input(x, y)
    scaler = None
    if spec.family in SCALED_FAMILIES:
        scaler = fit_scaler(x)
        x = apply_scaler(scaler, x)

    if spec.family == "knn":
        model = fit_knn(spec.params["k"], x, y)
    elif spec.family == "svm":
        model = fit_svm(spec.params["C"], x, y)
    elif spec.family in ("rf", "et"):
        model = fit_forest(
            spec.family, x, y,
            n_estimators=spec.params["n_estimators"],
            min_samples_split_fraction=spec.params["min_samples_split"],
            seed=spec.seed,
        )
    elif spec.family == "gb":
        model = fit_gradient_boosting(
            x, y,
            n_estimators=spec.params["n_estimators"],
            min_samples_split_fraction=spec.params["min_samples_split"],
            seed=spec.seed,
            subsample=spec.params.get("subsample", GB_SUBSAMPLE),
        )
    else:  # pragma: no cover - guarded by ClassifierSpec
        raise ValueError(spec.family)
    return TrainedModel(spec=spec, scaler=scaler, model=model)


def predict_proba(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    """Genuine-class probability per row of x, always within [0, 1]."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise InputError(f"expected {model.n_features} features, got {x.shape}")
    if model.scaler is not None:
        x = apply_scaler(model.scaler, x)
    return model.model.predict_proba(x)
