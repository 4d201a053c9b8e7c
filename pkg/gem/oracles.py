"""Plain reference computations the tests compare against."""

from collections import Counter
from typing import Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.special import expit

from gem.errors import ModelError
from gem.ingest import Dataset


def ols_oracle(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """beta = (X'X)^-1 X'Y through the explicit inverse."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    XtX = X.T @ X
    if np.linalg.matrix_rank(XtX) < XtX.shape[0]:
        raise ModelError("X'X is singular.")
    return np.linalg.inv(XtX) @ X.T @ Y


def cell_means_oracle(d: Dataset, factor: str) -> np.ndarray:
    """Level means of Y minus the grand mean (levels x responses, sorted levels).

    Only defined for factors observed equally often at every level.
    """
    variable = d.variable(factor)
    if not variable.is_categorical:
        raise ModelError(f"'{factor}' is not categorical.")
    counts = Counter(variable.values)
    if len(set(counts.values())) != 1:
        raise ModelError(f"Factor '{factor}' is unbalanced: {dict(sorted(counts.items()))}.")
    grand = d.Y.mean(axis=0)
    labels = np.asarray(variable.values)
    return np.vstack([d.Y[labels == level].mean(axis=0) - grand for level in sorted(counts)])


def eig_oracle(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors of the sample covariance."""
    X = np.asarray(X, dtype=float)
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    values, vectors = linalg.eigh(cov)
    order = np.argsort(values)[::-1]
    return np.clip(values[order], 0.0, None), vectors[:, order]


def pls_oracle(X: np.ndarray, y: np.ndarray, ncomp: int) -> np.ndarray:
    """Textbook PLS1 regression vector, deflating both X and y."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, N = X.shape
    if ncomp == 0:
        return np.zeros(N)
    if ncomp < 0 or ncomp > min(n - 1, N):
        raise ModelError(f"ncomp must be between 0 and {min(n - 1, N)}, got {ncomp}.")
    E = X - X.mean(axis=0)
    f = y - y.mean()
    W, P, q = [], [], []
    for _ in range(ncomp):
        w = E.T @ f
        w = w / np.sqrt(w @ w)
        t = E @ w
        p = E.T @ t / (t @ t)
        c = (f @ t) / (t @ t)
        E = E - np.outer(t, p)
        f = f - c * t
        W.append(w)
        P.append(p)
        q.append(c)
    W, P, q = np.array(W).T, np.array(P).T, np.array(q)
    return W @ np.linalg.inv(P.T @ W) @ q


def kkt_check(
    X: np.ndarray,
    y: Sequence,
    coefs: Tuple[float, np.ndarray],
    lam: float,
    alpha: float,
    family: str = "gaussian",
) -> float:
    """Largest violation of the elastic-net optimality conditions.

    ``coefs`` is (intercept, slopes) on the original scale of X; conditions are
    checked on standardized columns (mean 0, variance 1). Binomial targets are
    coded 0/1 in sorted label order and probabilities clipped to [1e-5, 1-1e-5].
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    intercept, slopes = coefs
    slopes = np.asarray(slopes, dtype=float)

    mean, sd = X.mean(axis=0), X.std(axis=0)
    varying = sd > 0
    Z = (X[:, varying] - mean[varying]) / sd[varying]
    b = slopes[varying] * sd[varying]
    b0 = intercept + slopes @ mean

    if family == "binomial":
        labels = np.asarray([str(v) for v in np.asarray(y).ravel()])
        target = (labels == sorted(set(labels))[-1]).astype(float)
        fitted = np.clip(expit(b0 + Z @ b), 1e-5, 1.0 - 1e-5)
    else:
        target = np.asarray(y, dtype=float).ravel()
        fitted = b0 + Z @ b
    residual = target - fitted
    grad = -Z.T @ residual / n

    worst = abs(float(residual.mean()))
    l1, l2 = lam * alpha, lam * (1.0 - alpha)
    nonzero = b != 0
    if np.any(nonzero):
        worst = max(worst, float(np.max(np.abs(grad[nonzero] + l1 * np.sign(b[nonzero]) + l2 * b[nonzero]))))
    if np.any(~nonzero):
        worst = max(worst, float(np.max(np.abs(grad[~nonzero]) - l1)))
    if np.any(slopes[~varying] != 0):
        worst = max(worst, float(np.max(np.abs(slopes[~varying]))))
    return max(worst, 0.0)
