"""Soft-margin SVM trained by sequential minimal optimisation.

Working pairs are chosen by the first-order maximal-violating-pair rule and
each pair is solved analytically, so training is deterministic for a given
sample order.  Optimisation stops once the KKT gap drops below ``tol``.
"""
import logging

import numpy as np

from .base import Standardizer
from .kernels import kernel_matrix

log = logging.getLogger(__name__)

TAU = 1e-12


def smo(K, y, C, tol=1e-3, max_iter=None):
    """Solve the SVM dual for a precomputed Gram matrix.

    Returns ``(alpha, bias, info)`` where the decision function is
    ``sum_j alpha_j y_j K(x_j, x) + bias``.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if max_iter is None:
        max_iter = max(10 * n * n, 10000)
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    pos = y > 0

    iterations = 0
    converged = False
    while iterations < max_iter:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        score = -y * grad
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        if score[i] - score[j] < tol:
            converged = True
            break
        iterations += 1

        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(Q[i, i] + Q[j, j] + 2 * Q[i, j], TAU)
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = max(Q[i, i] + Q[j, j] - 2 * Q[i, j], TAU)
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total

        grad += Q[:, i] * (ni - ai) + Q[:, j] * (nj - aj)
        alpha[i], alpha[j] = ni, nj

    score = -y * grad
    up = np.where(pos, alpha < C, alpha > 0)
    low = np.where(pos, alpha > 0, alpha < C)
    hi = score[up].max() if up.any() else score[low].min()
    lo = score[low].min() if low.any() else score[up].max()
    bias = 0.5 * (hi + lo)
    if not converged:
        log.warning("SMO stopped after %d iterations with KKT gap %.3g", iterations, hi - lo)
    return alpha, bias, {"iterations": iterations, "converged": converged}


def kkt_violation(K, y, alpha, bias, C):
    """Largest KKT violation of a dual solution, recomputed from scratch."""
    y = np.asarray(y, dtype=float)
    margin = y * (K @ (alpha * y) + bias)
    eps = 1e-9 * C
    at_zero = alpha <= eps
    at_C = alpha >= C - eps
    free = ~at_zero & ~at_C
    v = np.zeros(len(y))
    v[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    v[at_C] = np.maximum(0.0, margin[at_C] - 1.0)
    v[free] = np.abs(margin[free] - 1.0)
    return float(v.max()) if len(v) else 0.0


def default_gamma(Z):
    var = float(np.var(Z, axis=0).mean())
    return 1.0 / (Z.shape[1] * var) if var > 0 else 1.0 / Z.shape[1]


class SvmModel:
    kind = "svm"

    def __init__(self, support_vectors, dual_coef, bias, kernel, gamma, degree, C, scaler,
                 info=None):
        self.support_vectors = np.asarray(support_vectors, dtype=float).reshape(
            len(dual_coef), len(scaler.mean))
        self.dual_coef = np.asarray(dual_coef, dtype=float)  # alpha_i * y_i
        self.bias = float(bias)
        self.kernel = kernel
        self.gamma = float(gamma)
        self.degree = int(degree)
        self.C = float(C)
        self.scaler = scaler
        self.info = info or {}

    @classmethod
    def fit(cls, X, y, kernel="polynomial", C=1.0, gamma=None, degree=3, tol=1e-3):
        scaler = Standardizer.fit(X)
        Z = scaler.transform(X)
        gamma = default_gamma(Z) if gamma is None else gamma
        K = kernel_matrix(kernel, Z, Z, gamma, degree)
        alpha, bias, info = smo(K, y, C, tol)
        info["kkt_violation"] = kkt_violation(K, y, alpha, bias, C)
        info["n_support"] = int((alpha > 0).sum())
        sv = alpha > 0
        return cls(Z[sv], alpha[sv] * np.asarray(y)[sv], bias, kernel, gamma, degree, C,
                   scaler, info)

    @property
    def n_features(self):
        return len(self.scaler.mean)

    def decision_function(self, X):
        Z = self.scaler.transform(np.atleast_2d(X))
        if len(self.dual_coef) == 0:
            return np.full(len(Z), self.bias)
        K = kernel_matrix(self.kernel, Z, self.support_vectors, self.gamma, self.degree)
        return K @ self.dual_coef + self.bias

    def predict_signs(self, X):
        # a decision value of exactly zero counts as normal
        return np.where(self.decision_function(X) > 0, 1, -1)

    def to_dict(self):
        return {
            "kernel": self.kernel, "gamma": self.gamma, "degree": self.degree, "C": self.C,
            "bias": self.bias, "dual_coef": self.dual_coef.tolist(),
            "support_vectors": self.support_vectors.tolist(), "scaler": self.scaler.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["support_vectors"], d["dual_coef"], d["bias"], d["kernel"], d["gamma"],
                   d["degree"], d["C"], Standardizer.from_dict(d["scaler"]))
