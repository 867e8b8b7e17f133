"""Logistic regression and the four baseline classifiers behind one contract.

Every model exposes ``score(X)`` (larger means more confidently class 1) and
``predict(X)`` (``score`` thresholded: 0.5 for probability-like scores, 0 for
the SVM margin), plus ``to_dict`` for serialization.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError, UsageError
from .logreg import LogRegModel, logreg_fit, sigmoid
from .svm import LinearSvmModel, svm_fit
from .trees import ForestModel, GbtModel, TreeModel, forest_fit, gbt_fit, tree_fit

__all__ = [
    "LogRegModel", "LinearSvmModel", "TreeModel", "ForestModel", "GbtModel",
    "logreg_fit", "svm_fit", "tree_fit", "forest_fit", "gbt_fit", "sigmoid",
    "predict", "score", "threshold_of", "fit_classifier", "model_from_dict",
    "BASELINE_DEFAULTS", "DISPLAY_NAMES",
]

# conventional defaults; only logistic regression is grid-searched
BASELINE_DEFAULTS = {
    "svm": {"C": 1.0, "epochs": 200},
    "tree": {"max_depth": 12, "min_samples_leaf": 1},
    "forest": {"n_trees": 50, "max_depth": 12},
    "gbt": {"n_stages": 100, "max_depth": 3, "learning_rate": 0.1},
}

DISPLAY_NAMES = {
    "logreg": "OFS-ULR",
    "svm": "SVM",
    "tree": "Decision Tree Classifier",
    "forest": "Random Forest Classifier",
    "gbt": "Gradient Boosted Trees Classifier",
}

_LOADERS = {
    "logreg": LogRegModel.from_dict,
    "svm": LinearSvmModel.from_dict,
    "tree": TreeModel.from_dict,
    "forest": ForestModel.from_dict,
    "gbt": GbtModel.from_dict,
}


def threshold_of(model) -> float:
    return 0.0 if model.kind == "svm" else 0.5


def score(model, X) -> np.ndarray:
    return model.score(X)


def predict(model, X) -> np.ndarray:
    return (model.score(X) >= threshold_of(model)).astype(int)


def fit_classifier(kind: str, X, y, seed: int = 0, **params):
    """Fit a classifier by kind name; unspecified parameters use the defaults."""
    if kind == "logreg":
        return logreg_fit(X, y, **params)
    if kind not in BASELINE_DEFAULTS:
        raise UsageError(f"unknown classifier {kind!r}")
    kw = {**BASELINE_DEFAULTS[kind], **params}
    if kind == "svm":
        return svm_fit(X, y, seed=seed, **kw)
    if kind == "tree":
        return tree_fit(X, y, **kw)
    if kind == "forest":
        return forest_fit(X, y, seed=seed, **kw)
    return gbt_fit(X, y, **kw)


def model_from_dict(d: dict):
    try:
        loader = _LOADERS[d["kind"]]
    except KeyError:
        raise DataError(f"unknown or missing model kind in {sorted(d)[:5]}") from None
    return loader(d)
