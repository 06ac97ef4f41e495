"""Binary normal/abnormal classifiers behind a single fit/predict interface.

Labels are handled as signs internally: +1 abnormal, -1 normal.
"""
import json

import numpy as np

from ..dataset_io import Label
from .base import ClassifierConfig, Standardizer, as_signs, check_training_data
from .kernels import kernel_eval, kernel_matrix
from .knn import KnnModel
from .svm import SvmModel
from .tree import TreeModel

MODEL_FORMAT = "pcgscreen-model"
MODEL_VERSION = 1

_MODEL_TYPES = {"knn": KnnModel, "svm": SvmModel, "dt": TreeModel}


def fit(config, X, y):
    """Train the classifier described by ``config`` on rows of ``X``."""
    X, y = check_training_data(X, y)
    if config.kind == "knn":
        return KnnModel.fit(X, y, config.k)
    if config.kind == "svm":
        return SvmModel.fit(X, y, config.kernel, config.svm_C, config.gamma,
                            config.poly_degree, config.svm_tol)
    return TreeModel.fit(X, y, config.dt_min_leaf, config.dt_max_depth)


def predict_signs(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got {X.shape[1]}")
    return np.asarray(model.predict_signs(X), dtype=int)


def predict(model, features):
    """Classify one feature vector."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 1:
        raise ValueError("predict expects a single feature vector")
    return Label(int(predict_signs(model, features[None, :])[0]))


def model_to_dict(model):
    return {"kind": model.kind, "params": model.to_dict()}


def model_from_dict(d):
    try:
        cls = _MODEL_TYPES[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown model kind {d.get('kind')!r}") from None
    return cls.from_dict(d["params"])


def save_model(path, payload):
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, **payload}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model_file(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
    return doc


__all__ = [
    "ClassifierConfig", "KnnModel", "SvmModel", "Standardizer", "TreeModel", "as_signs",
    "fit", "kernel_eval", "kernel_matrix", "load_model_file", "model_from_dict",
    "model_to_dict", "predict", "predict_signs", "save_model",
]
