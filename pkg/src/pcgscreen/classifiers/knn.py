import numpy as np

from .base import Standardizer


class KnnModel:
    kind = "knn"

    def __init__(self, X, y, k, scaler):
        self.X = np.asarray(X, dtype=float)  # standardised
        self.y = np.asarray(y, dtype=int)
        self.k = int(k)
        self.scaler = scaler
        self.info = {}

    @classmethod
    def fit(cls, X, y, k, scaler=None):
        scaler = scaler or Standardizer.fit(X)
        return cls(scaler.transform(X), y, k, scaler)

    @property
    def n_features(self):
        return self.X.shape[1]

    def predict_signs(self, X):
        Z = self.scaler.transform(np.atleast_2d(X))
        d2 = ((Z[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
        k = min(self.k, len(self.y))
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        votes = self.y[order].sum(axis=1)
        # a tied vote falls back to the single nearest neighbour
        return np.where(votes > 0, 1, np.where(votes < 0, -1, self.y[order[:, 0]]))

    def to_dict(self):
        return {"k": self.k, "X": self.X.tolist(), "y": self.y.tolist(),
                "scaler": self.scaler.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["X"], d["y"], d["k"], Standardizer.from_dict(d["scaler"]))
