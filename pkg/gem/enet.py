"""Elastic-net paths by coordinate descent on standardized columns."""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from numba import njit
from scipy import linalg
from scipy.special import expit

from gem.crossval import CvScheme, loss_summary, one_se_index
from gem.errors import ModelError
from gem.utils import parallel_map

log = logging.getLogger(__name__)

GAUSSIAN = "gaussian"
BINOMIAL = "binomial"
FAMILIES = (GAUSSIAN, BINOMIAL)

NLAMBDA = 100
ALPHA_FLOOR = 1e-3
INNER_TOL = 1e-10
OUTER_TOL = 1e-7
MAX_SWEEPS = 10_000
MAX_IRLS = 100
PROB_CLIP = 1e-5


@dataclass(frozen=True, eq=False)
class EnetPath:
    """Coefficients along a decreasing lambda grid, on the original scale of X.

    ``cv_error``, ``cv_se`` and ``lambda_opt`` are filled in by cv_enet.
    """

    alpha: float
    family: str
    lambdas: np.ndarray
    intercepts: np.ndarray
    coefs: np.ndarray
    levels: Tuple[str, ...] = ()
    names: Tuple[str, ...] = ()
    cv_error: Optional[np.ndarray] = None
    cv_se: Optional[np.ndarray] = None
    lambda_opt: Optional[float] = None
    n_folds: int = 0

    @property
    def df(self) -> np.ndarray:
        """Number of nonzero slopes per lambda."""
        return np.count_nonzero(self.coefs, axis=1)

    def index(self, lam: float) -> int:
        hits = np.flatnonzero(np.isclose(self.lambdas, lam, rtol=1e-12, atol=0.0))
        if hits.size == 0:
            raise ModelError(f"lambda={lam:g} is not on the fitted grid.")
        return int(hits[0])

    def variable_name(self, j: int) -> str:
        return self.names[j] if self.names else f"x{j + 1}"


@njit
def _sweep(G: np.ndarray, b: np.ndarray, r: np.ndarray, indices: np.ndarray, l1: float, l2: float) -> float:
    """One pass of coordinate updates; returns the largest coefficient change."""
    largest = 0.0
    for j in indices:
        old = b[j]
        gjj = G[j, j]
        u = r[j] + gjj * old
        if u > l1:
            new = (u - l1) / (gjj + l2)
        elif u < -l1:
            new = (u + l1) / (gjj + l2)
        else:
            new = 0.0
        if new != old:
            delta = new - old
            for i in range(r.size):
                r[i] -= G[j, i] * delta
            b[j] = new
            step = abs(delta) * np.sqrt(gjj)
            if step > largest:
                largest = step
    return largest


@njit
def _cycle(G: np.ndarray, b: np.ndarray, r: np.ndarray, l1: float, l2: float, tol: float, max_sweeps: int) -> bool:
    """Full sweeps alternating with sweeps over the active set until a full sweep is quiet."""
    everything = np.arange(b.size)
    for _ in range(max_sweeps):
        if _sweep(G, b, r, everything, l1, l2) <= tol:
            return True
        active = np.nonzero(b)[0]
        for _ in range(max_sweeps):
            if _sweep(G, b, r, active, l1, l2) <= tol:
                break
    return False


def _polish(G: np.ndarray, c: np.ndarray, b: np.ndarray, l1: float, l2: float) -> Optional[np.ndarray]:
    """Exact solution on the current active set, if it satisfies the sign and
    inactive-set conditions."""
    active = np.flatnonzero(b)
    if active.size == 0:
        return b if np.all(np.abs(c) <= l1) else None
    signs = np.sign(b[active])
    lhs = G[np.ix_(active, active)] + l2 * np.eye(active.size)
    try:
        solved = linalg.solve(lhs, c[active] - l1 * signs, assume_a="pos")
    except (linalg.LinAlgError, ValueError):
        return None
    if not np.all(np.sign(solved) == signs):
        return None
    out = np.zeros_like(b)
    out[active] = solved
    inactive = np.setdiff1d(np.arange(b.size), active)
    if inactive.size:
        grad = c[inactive] - G[np.ix_(inactive, active)] @ solved
        if np.any(np.abs(grad) > l1 * (1.0 + 1e-9) + 1e-14):
            return None
    return out


def _descend(G: np.ndarray, c: np.ndarray, lam: float, alpha: float, start: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Minimizes b'Gb/2 - c'b + lam*(alpha*|b|_1 + (1-alpha)/2*|b|^2)."""
    l1, l2 = lam * alpha, lam * (1.0 - alpha)
    warm = _polish(G, c, start, l1, l2)
    if warm is not None:
        return warm, True
    b = np.array(start, dtype=float)
    r = np.ascontiguousarray(c - G @ b)
    converged = _cycle(np.ascontiguousarray(G), b, r, float(l1), float(l2), INNER_TOL, MAX_SWEEPS)
    polished = _polish(G, c, b, l1, l2)
    if polished is not None:
        return polished, True
    return b, converged


@dataclass(frozen=True)
class _Standardized:
    mean: np.ndarray
    scale: np.ndarray
    free: np.ndarray
    Z: np.ndarray


def _standardize(X: np.ndarray) -> _Standardized:
    """Mean 0 / variance 1 columns; constant columns are left out of the fit."""
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    free = np.flatnonzero(scale > 0)
    if free.size == 0:
        raise ModelError("Every column of X is constant.")
    Z = (X[:, free] - mean[free]) / scale[free]
    return _Standardized(mean, scale, free, Z)


def _encode_binomial(y: Sequence) -> Tuple[np.ndarray, Tuple[str, ...]]:
    labels = np.asarray([str(v) for v in np.asarray(y).ravel()], dtype=object)
    levels = tuple(sorted(set(labels)))
    if len(levels) != 2:
        raise ModelError(f"Binomial target needs exactly 2 classes, got {len(levels)}.")
    return (labels == levels[1]).astype(float), levels


def _check_options(alpha: float, family: str, nlambda: int, lambdas: Optional[Sequence[float]]):
    if not 0.0 <= alpha <= 1.0:
        raise ModelError(f"alpha must be in [0, 1], got {alpha}.")
    if family not in FAMILIES:
        raise ModelError(f"Unknown family '{family}' (use {' or '.join(FAMILIES)}).")
    if lambdas is None and nlambda < 2:
        raise ModelError(f"nlambda must be at least 2, got {nlambda}.")
    if lambdas is not None and len(lambdas) == 0:
        raise ModelError("Got an empty lambda sequence.")


def _lambda_max(c0: np.ndarray, alpha: float) -> float:
    """Smallest lambda at which every slope is zero, from the gradient at b = 0.

    For alpha = 0 the value is undefined; the grid is anchored at the
    alpha = 1e-3 value instead.
    """
    return float(np.max(np.abs(c0))) / max(alpha, ALPHA_FLOOR)


def lambda_grid(lam_max: float, nlambda: int, n: int, N: int, lambda_min_ratio: Optional[float] = None) -> np.ndarray:
    """Log-spaced decreasing grid from lam_max down to lam_max * ratio."""
    if lam_max <= 0:
        raise ModelError("The target is uncorrelated with every column; lambda_max is zero.")
    ratio = lambda_min_ratio if lambda_min_ratio is not None else (1e-4 if n > N else 1e-2)
    return lam_max * np.logspace(0.0, np.log10(ratio), nlambda)


def fit_enet_path(
    X: np.ndarray,
    y: Sequence,
    alpha: float = 0.5,
    family: str = GAUSSIAN,
    nlambda: int = NLAMBDA,
    lambda_min_ratio: Optional[float] = None,
    lambdas: Optional[Sequence[float]] = None,
    names: Sequence[str] = (),
) -> EnetPath:
    """Warm-started coordinate descent along a decreasing lambda grid.

    Binomial targets are fitted by iteratively reweighted quadratic
    approximations; the first sorted class is coded 0.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ModelError("X must be a matrix.")
    n, N = X.shape
    _check_options(alpha, family, nlambda, lambdas)
    if names and len(names) != N:
        raise ModelError(f"Got {len(names)} variable names for {N} columns.")

    levels: Tuple[str, ...] = ()
    if family == BINOMIAL:
        target, levels = _encode_binomial(y)
    else:
        target = np.asarray(y, dtype=float).ravel()
        if np.ptp(target) == 0:
            raise ModelError("Gaussian target has zero variance.")
    if target.size != n:
        raise ModelError(f"Target has {target.size} rows, X has {n}.")

    std = _standardize(X)
    Z = std.Z
    c0 = Z.T @ (target - target.mean()) / n
    lam_max = _lambda_max(c0, alpha)
    if lambdas is None:
        grid = lambda_grid(lam_max, nlambda, n, N, lambda_min_ratio)
    else:
        grid = np.sort(np.asarray(lambdas, dtype=float))[::-1]
        if np.any(grid <= 0):
            raise ModelError("Lambdas must be positive.")

    K, p = grid.size, Z.shape[1]
    slopes = np.zeros((K, p))
    intercepts = np.zeros(K)
    b = np.zeros(p)
    if family == GAUSSIAN:
        G = Z.T @ Z / n
        b0 = float(target.mean())
        for k, lam in enumerate(grid):
            if alpha > 0 and lam >= lam_max:
                b = np.zeros(p)
            else:
                b, ok = _descend(G, c0, lam, alpha, b)
                if not ok:
                    log.warning("Coordinate descent did not converge at lambda=%g.", lam)
            slopes[k], intercepts[k] = b, b0
    else:
        ybar = float(target.mean())
        b0 = float(np.log(ybar / (1.0 - ybar)))
        for k, lam in enumerate(grid):
            if alpha > 0 and lam >= lam_max:
                b, b0 = np.zeros(p), float(np.log(ybar / (1.0 - ybar)))
            else:
                b0, b = _binomial_point(Z, target, lam, alpha, b0, b)
            slopes[k], intercepts[k] = b, b0

    coefs = np.zeros((K, N))
    coefs[:, std.free] = slopes / std.scale[std.free]
    intercepts = intercepts - coefs @ std.mean
    log.debug("Elastic-net path: %d lambdas from %g to %g, df %d..%d.", K, grid[0], grid[-1], np.count_nonzero(coefs[0]), np.count_nonzero(coefs[-1]))
    return EnetPath(
        alpha=float(alpha),
        family=family,
        lambdas=grid,
        intercepts=intercepts,
        coefs=coefs,
        levels=levels,
        names=tuple(names),
    )


def _binomial_point(Z: np.ndarray, y: np.ndarray, lam: float, alpha: float, b0: float, b: np.ndarray) -> Tuple[float, np.ndarray]:
    n = y.size
    for _ in range(MAX_IRLS):
        eta = b0 + Z @ b
        prob = np.clip(expit(eta), PROB_CLIP, 1.0 - PROB_CLIP)
        w = prob * (1.0 - prob)
        z = eta + (y - prob) / w
        sw = w.sum()
        z_mean = float(w @ z) / sw
        x_mean = w @ Z / sw
        Zc = Z - x_mean
        Zw = Zc * w[:, None]
        G = Zw.T @ Zc / n
        c = Zw.T @ (z - z_mean) / n
        new_b, ok = _descend(G, c, lam, alpha, b)
        if not ok:
            log.warning("Coordinate descent did not converge at lambda=%g.", lam)
        new_b0 = z_mean - float(x_mean @ new_b)
        change = max(abs(new_b0 - b0), float(np.max(np.abs(new_b - b))) if b.size else 0.0)
        b0, b = new_b0, new_b
        if change <= OUTER_TOL:
            return b0, b
    log.warning("Reweighted least squares did not converge at lambda=%g.", lam)
    return b0, b


def predict_enet(path: EnetPath, Xnew: np.ndarray, lam: Optional[float] = None) -> np.ndarray:
    """Linear predictor (gaussian) or probability of the second class (binomial).

    Defaults to lambda_opt when cross-validated, else the smallest lambda.
    """
    k = _lambda_index(path, lam)
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
    if Xnew.shape[1] != path.coefs.shape[1]:
        raise ModelError(f"Expected {path.coefs.shape[1]} columns, got {Xnew.shape[1]}.")
    eta = path.intercepts[k] + Xnew @ path.coefs[k]
    return expit(eta) if path.family == BINOMIAL else eta


def classify_enet(path: EnetPath, Xnew: np.ndarray, lam: Optional[float] = None) -> np.ndarray:
    """Class labels with a 0.5 probability threshold; ties go to the first class."""
    if path.family != BINOMIAL:
        raise ModelError("Only binomial paths classify.")
    prob = predict_enet(path, Xnew, lam)
    return np.asarray(path.levels, dtype=object)[(prob > 0.5).astype(int)]


def nonzero_set(path: EnetPath, lam: float) -> Tuple[Tuple[int, str], ...]:
    """(index, name) of the variables with a nonzero coefficient at lam."""
    k = path.index(lam)
    return tuple((int(j), path.variable_name(int(j))) for j in np.flatnonzero(path.coefs[k]))


def _lambda_index(path: EnetPath, lam: Optional[float]) -> int:
    if lam is not None:
        return path.index(lam)
    if path.lambda_opt is not None:
        return path.index(path.lambda_opt)
    return path.lambdas.size - 1


def cv_enet(
    X: np.ndarray,
    y: Sequence,
    alpha: float = 0.5,
    family: str = GAUSSIAN,
    scheme: CvScheme = CvScheme(),
    nlambda: int = NLAMBDA,
    lambda_min_ratio: Optional[float] = None,
    names: Sequence[str] = (),
) -> EnetPath:
    """Full-data path with cross-validated error on a shared grid.

    Error is the misclassification rate (binomial) or mean squared error
    (gaussian); lambda_opt is the largest lambda within one standard error of
    the minimum.
    """
    X = np.asarray(X, dtype=float)
    full = fit_enet_path(X, y, alpha, family, nlambda, lambda_min_ratio, names=names)
    grid = full.lambdas

    if family == BINOMIAL:
        labels = np.asarray([str(v) for v in np.asarray(y).ravel()], dtype=object)
    else:
        labels = np.asarray(y, dtype=float).ravel()
    splits = scheme.splits(X.shape[0], labels if family == BINOMIAL else None)

    def fold_losses(split):
        train, test = split
        fold = fit_enet_path(X[train], labels[train], alpha, family, lambdas=grid)
        losses = np.empty((test.size, grid.size))
        for k, lam in enumerate(fold.lambdas):
            if family == BINOMIAL:
                losses[:, k] = classify_enet(fold, X[test], lam) != labels[test]
            else:
                losses[:, k] = (predict_enet(fold, X[test], lam) - labels[test]) ** 2
        return test, losses

    losses = np.empty((X.shape[0], grid.size))
    for test, fold in parallel_map(fold_losses, splits):
        losses[test] = fold
    error, se = loss_summary(losses)
    best = one_se_index(error, se)
    log.debug("Elastic-net %s: minimum error %.4f, lambda_opt %g (df %d).", scheme.label, error.min(), grid[best], full.df[best])
    return replace(full, cv_error=error, cv_se=se, lambda_opt=float(grid[best]), n_folds=len(splits))
