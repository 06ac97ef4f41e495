import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..dataset_io import Label
from ..errors import ConfigurationError

log = logging.getLogger(__name__)

KINDS = ("knn", "svm", "dt")
KERNELS = ("linear", "gaussian", "polynomial")


@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = "svm"
    k: int = 3
    kernel: str = "polynomial"
    svm_C: float = 1.0
    poly_degree: int = 3
    gamma: Optional[float] = None  # None: 1 / (n_features * mean feature variance)
    svm_tol: float = 1e-3
    dt_min_leaf: int = 5
    dt_max_depth: Optional[int] = 12

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"classifier kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "knn" and self.k not in (1, 3, 5, 7):
            raise ConfigurationError(f"k must be 1, 3, 5 or 7, got {self.k}")
        if self.kind == "svm":
            if self.kernel not in KERNELS:
                raise ConfigurationError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
            if self.svm_C <= 0:
                raise ConfigurationError("svm_C must be positive")
            if self.poly_degree < 1:
                raise ConfigurationError("poly_degree must be at least 1")
            if self.gamma is not None and self.gamma <= 0:
                raise ConfigurationError("gamma must be positive")
        if self.kind == "dt":
            if self.dt_min_leaf < 1:
                raise ConfigurationError("dt_min_leaf must be at least 1")
            if self.dt_max_depth is not None and self.dt_max_depth < 0:
                raise ConfigurationError("dt_max_depth must be non-negative")

    def as_dict(self):
        return asdict(self)

    def describe(self):
        if self.kind == "knn":
            return f"kNN (k={self.k})"
        if self.kind == "svm":
            extra = f", d={self.poly_degree}" if self.kernel == "polynomial" else ""
            return f"SVM ({self.kernel}, C={self.svm_C}{extra})"
        return f"DT (min_leaf={self.dt_min_leaf}, max_depth={self.dt_max_depth})"


class Standardizer:
    """Per-feature z-scoring fitted on training data only."""

    def __init__(self, mean, std, flagged=()):
        self.mean = np.asarray(mean, dtype=float)
        self.std = np.asarray(std, dtype=float)
        self.flagged = tuple(int(i) for i in flagged)

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        flagged = np.flatnonzero(std == 0)
        if len(flagged):
            log.debug("zero-variance features %s standardised with unit scale", flagged.tolist())
        std = np.where(std == 0, 1.0, std)
        return cls(mean, std, flagged)

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "flagged": list(self.flagged)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mean"], d["std"], d.get("flagged", ()))


def as_signs(y):
    """Map labels to +1 (abnormal) / -1 (normal)."""
    y = np.asarray([int(Label.parse(v)) for v in np.ravel(y)], dtype=int)
    if np.any(y == 0):
        raise ValueError("uncertain labels cannot be used for training")
    return y


def check_training_data(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D array")
    y = as_signs(y)
    if len(y) != len(X):
        raise ValueError(f"{len(X)} feature rows but {len(y)} labels")
    if len(X) < 2:
        raise ValueError("need at least 2 training samples")
    if np.isnan(X).any():
        raise ValueError("training features contain NaN")
    if len(np.unique(y)) < 2:
        raise ValueError("training data contains a single class")
    return X, y
