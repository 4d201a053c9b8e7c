import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from gem.errors import ModelError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PcaModel:
    center: np.ndarray
    scale: Optional[np.ndarray]
    scores: np.ndarray
    loadings: np.ndarray
    singular_values: np.ndarray
    explained_variance: np.ndarray

    @property
    def ncomp(self) -> int:
        return self.loadings.shape[1]


def _standardize(X: np.ndarray, center: np.ndarray, scale: Optional[np.ndarray]) -> np.ndarray:
    Xc = X - center
    return Xc / scale if scale is not None else Xc


def fit_pca(X: np.ndarray, ncomp: int, scale: bool = False) -> PcaModel:
    """PCA by SVD of the centered (optionally autoscaled) matrix.

    Each loading column is signed so that its largest absolute entry is
    positive.
    """
    X = np.asarray(X, dtype=float)
    n, N = X.shape
    if not np.all(np.isfinite(X)):
        raise ModelError("PCA input contains non-finite values.")
    limit = min(n - 1, N)
    if ncomp < 1 or ncomp > limit:
        raise ModelError(f"ncomp must be between 1 and {limit}, got {ncomp}.")

    center = X.mean(axis=0)
    std = None
    if scale:
        std = X.std(axis=0, ddof=1)
        if np.any(std == 0):
            raise ModelError(f"Cannot autoscale constant column {int(np.flatnonzero(std == 0)[0])}.")
    Xs = _standardize(X, center, std)

    U, s, Vt = linalg.svd(Xs, full_matrices=False)
    P = Vt[:ncomp].T
    pivot = np.argmax(np.abs(P), axis=0)
    signs = np.sign(P[pivot, np.arange(ncomp)])
    signs[signs == 0] = 1.0
    P = P * signs
    T = U[:, :ncomp] * (s[:ncomp] * signs)

    total = float(np.sum(s ** 2))
    explained = s[:ncomp] ** 2 / total if total > 0 else np.zeros(ncomp)
    return PcaModel(
        center=center,
        scale=std,
        scores=T,
        loadings=P,
        singular_values=s[:ncomp],
        explained_variance=explained,
    )


def project(model: PcaModel, Xnew: np.ndarray) -> np.ndarray:
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
    if Xnew.shape[1] != model.loadings.shape[0]:
        raise ModelError(f"Expected {model.loadings.shape[0]} columns, got {Xnew.shape[1]}.")
    return _standardize(Xnew, model.center, model.scale) @ model.loadings


def correlation_loadings(model, X: np.ndarray) -> np.ndarray:
    """Pearson correlation of every column of X with every score vector.

    Works for any model exposing ``scores`` (PCA or PLS). Constant columns get
    correlation 0.
    """
    X = np.asarray(X, dtype=float)
    T = np.asarray(model.scores, dtype=float)
    Xc = X - X.mean(axis=0)
    Tc = T - T.mean(axis=0)
    x_norm = np.sqrt(np.sum(Xc ** 2, axis=0))
    t_norm = np.sqrt(np.sum(Tc ** 2, axis=0))
    denom = np.outer(x_norm, t_norm)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(denom > 0, (Xc.T @ Tc) / denom, 0.0)
    return np.clip(corr, -1.0, 1.0)


def explained_y(model: PcaModel, y: np.ndarray) -> np.ndarray:
    """Per-component share of the variance of y explained by the PCA scores."""
    y = np.asarray(y, dtype=float).ravel()
    yc = y - y.mean()
    ss = float(yc @ yc)
    if ss == 0:
        return np.zeros(model.ncomp)
    T = model.scores
    return (T.T @ yc) ** 2 / (np.sum(T ** 2, axis=0) * ss)
