"""CART decision tree with Gini impurity and midpoint thresholds."""
import numpy as np


def gini(y):
    """Gini impurity of a vector of +1/-1 labels."""
    n = len(y)
    if n == 0:
        return 0.0
    p = np.count_nonzero(np.asarray(y) > 0) / n
    return 2.0 * p * (1.0 - p)


def best_split(X, y, min_leaf=1):
    """Return ``(feature, threshold, weighted_gini)`` or None.

    Samples with ``x[feature] < threshold`` go left.  Ties between equally
    good splits resolve to the lowest feature index, then the lowest
    threshold.
    """
    n, d = X.shape
    best = None
    pos = (y > 0).astype(float)
    for f in range(d):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ps = pos[order]
        n_left = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        pos_left = np.cumsum(ps)[:-1]
        pos_right = ps.sum() - pos_left
        n_right = n - n_left
        p_l = pos_left / n_left
        p_r = pos_right / n_right
        weighted = (n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)) / n
        weighted = np.where(valid, weighted, np.inf)
        i = int(np.argmin(weighted))
        if best is None or weighted[i] < best[2]:
            best = (f, 0.5 * (xs[i] + xs[i + 1]), float(weighted[i]))
    return best


class TreeModel:
    kind = "dt"

    def __init__(self, feature, threshold, left, right, value, n_features):
        self.feature = np.asarray(feature, dtype=int)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        self.value = np.asarray(value, dtype=int)
        self._n_features = int(n_features)
        self.info = {}

    @classmethod
    def fit(cls, X, y, min_leaf=1, max_depth=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node():
            for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0)):
                arr.append(v)
            return len(feature) - 1

        root = new_node()
        stack = [(root, np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            labels = y[idx]
            n_pos = int((labels > 0).sum())
            # majority class; an even split goes to normal
            value[node] = 1 if n_pos > len(labels) - n_pos else -1
            if n_pos == 0 or n_pos == len(labels):
                continue
            if max_depth is not None and depth >= max_depth:
                continue
            if len(idx) < 2 * min_leaf:
                continue
            split = best_split(X[idx], labels, min_leaf)
            if split is None:
                continue
            f, t, _ = split
            go_left = X[idx, f] < t
            feature[node], threshold[node] = f, t
            l, r = new_node(), new_node()
            left[node], right[node] = l, r
            stack.append((r, idx[~go_left], depth + 1))
            stack.append((l, idx[go_left], depth + 1))
        return cls(feature, threshold, left, right, value, X.shape[1])

    @property
    def n_features(self):
        return self._n_features

    @property
    def n_nodes(self):
        return len(self.feature)

    def apply(self, X):
        """Leaf index reached by each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            goes_left = X[rows, self.feature[cur]] < self.threshold[cur]
            node[rows] = np.where(goes_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return node

    def predict_signs(self, X):
        return self.value[self.apply(X)]

    def depth(self):
        depths = {0: 0}
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return max(depths.values())

    def to_dict(self):
        return {
            "feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
            "left": self.left.tolist(), "right": self.right.tolist(),
            "value": self.value.tolist(), "n_features": self._n_features,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"],
                   d["n_features"])
