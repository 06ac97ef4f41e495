import numpy as np


def kernel_eval(kernel, x, y, gamma=1.0, degree=3):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("kernel arguments must have equal length")
    if kernel == "linear":
        return float(x @ y)
    if kernel == "polynomial":
        return float((gamma * (x @ y) + 1.0) ** degree)
    if kernel == "gaussian":
        d = x - y
        return float(np.exp(-gamma * (d @ d)))
    raise ValueError(f"unknown kernel {kernel!r}")


def kernel_matrix(kernel, A, B, gamma=1.0, degree=3):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if kernel == "linear":
        return A @ B.T
    if kernel == "polynomial":
        return (gamma * (A @ B.T) + 1.0) ** degree
    if kernel == "gaussian":
        sq = (A ** 2).sum(1)[:, None] + (B ** 2).sum(1)[None, :] - 2 * A @ B.T
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"unknown kernel {kernel!r}")
