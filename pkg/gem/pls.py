import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from gem.crossval import CvScheme, loss_summary, one_se_index
from gem.errors import ModelError
from gem.ingest import VariableSpec
from gem.utils import parallel_map

log = logging.getLogger(__name__)

CONTINUOUS = "continuous"
TWO_CLASS = "two-class"
MULTI_CLASS = "multi-class"


@dataclass(frozen=True, eq=False)
class TargetCoding:
    """Regression target derived from a design variable.

    two-class: one column, first sorted level -1, second +1.
    multi-class: one column per class, +1 for members and -1 otherwise.
    continuous: one centered column.
    """

    kind: str
    dummy: np.ndarray
    levels: Tuple[str, ...] = ()
    labels: Optional[np.ndarray] = None

    @property
    def is_categorical(self) -> bool:
        return self.kind != CONTINUOUS

    @property
    def n(self) -> int:
        return self.dummy.shape[0]


@dataclass(frozen=True, eq=False)
class PlsModel:
    """Single-response PLS with ``ncomp`` components.

    ``coefficients[:, a-1]`` is the regression vector using the first a
    components.
    """

    x_mean: np.ndarray
    y_mean: float
    scores: np.ndarray
    weights: np.ndarray
    loadings: np.ndarray
    y_loadings: np.ndarray
    coefficients: np.ndarray
    explained_x: np.ndarray
    explained_y: np.ndarray

    @property
    def ncomp(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True, eq=False)
class CvResult:
    scheme: CvScheme
    predictions: np.ndarray
    classes: Optional[np.ndarray]
    error: np.ndarray
    se: np.ndarray
    ncomp_selected: int
    n_segments: int


@dataclass(frozen=True)
class ShaveStep:
    variables: Tuple[int, ...]
    error: float


@dataclass(frozen=True)
class ShaveResult:
    trace: Tuple[ShaveStep, ...]
    min_red: int

    @property
    def optimal_subset(self) -> Tuple[int, ...]:
        return self.trace[self.min_red].variables

    @property
    def errors(self) -> np.ndarray:
        return np.array([step.error for step in self.trace])

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(step.variables) for step in self.trace])


def encode_target(variable: VariableSpec) -> TargetCoding:
    """Sum-style coding of a design variable used as PLS target."""
    if not variable.is_categorical:
        values = np.asarray(variable.values, dtype=float)
        return TargetCoding(CONTINUOUS, (values - values.mean()).reshape(-1, 1))

    labels = np.asarray(variable.values, dtype=object)
    present = set(labels)
    levels = tuple(level for level in variable.levels if level in present)
    if len(levels) < 2:
        raise ModelError(f"Target '{variable.name}' has a single observed level.")
    if len(levels) == 2:
        dummy = np.where(labels == levels[1], 1.0, -1.0).reshape(-1, 1)
        return TargetCoding(TWO_CLASS, dummy, levels, labels)
    dummy = np.column_stack([np.where(labels == level, 1.0, -1.0) for level in levels])
    return TargetCoding(MULTI_CLASS, dummy, levels, labels)


def fit_pls(X: np.ndarray, y: Union[np.ndarray, TargetCoding], ncomp: int) -> PlsModel:
    """Orthogonal-scores PLS1 (NIPALS) of a single response on X."""
    if isinstance(y, TargetCoding):
        if y.dummy.shape[1] != 1:
            raise ModelError("Multi-class targets are fitted per class column, use fit_target.")
        y = y.dummy[:, 0]
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, N = X.shape
    if y.size != n:
        raise ModelError(f"Target has {y.size} rows, X has {n}.")
    limit = min(n - 1, N)
    if ncomp < 1 or ncomp > limit:
        raise ModelError(f"ncomp must be between 1 and {limit}, got {ncomp}.")

    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xa = X - x_mean
    yc = y - y_mean
    ss_y = float(yc @ yc)
    if ss_y == 0:
        raise ModelError("Target has zero variance.")
    ss_x = float(np.sum(Xa ** 2))

    W = np.zeros((N, ncomp))
    P = np.zeros((N, ncomp))
    T = np.zeros((n, ncomp))
    q = np.zeros(ncomp)
    first_norm = None
    for a in range(ncomp):
        w = Xa.T @ yc
        norm = float(np.linalg.norm(w))
        if first_norm is None:
            first_norm = norm
        if norm <= 1e-12 * max(first_norm, 1e-300):
            raise ModelError(f"Component {a + 1} has no covariance left with the target; use fewer components.")
        w /= norm
        t = Xa @ w
        tt = float(t @ t)
        p = Xa.T @ t / tt
        W[:, a], P[:, a], T[:, a] = w, p, t
        q[a] = float(yc @ t) / tt
        Xa = Xa - np.outer(t, p)

    B = np.zeros((N, ncomp))
    for a in range(1, ncomp + 1):
        B[:, a - 1] = W[:, :a] @ np.linalg.solve(P[:, :a].T @ W[:, :a], q[:a])

    tt_all = np.sum(T ** 2, axis=0)
    explained_x = tt_all * np.sum(P ** 2, axis=0) / ss_x if ss_x > 0 else np.zeros(ncomp)
    explained_y = q ** 2 * tt_all / ss_y
    return PlsModel(
        x_mean=x_mean,
        y_mean=y_mean,
        scores=T,
        weights=W,
        loadings=P,
        y_loadings=q,
        coefficients=B,
        explained_x=explained_x,
        explained_y=explained_y,
    )


def predict(model: PlsModel, Xnew: np.ndarray, ncomp: Optional[int] = None) -> np.ndarray:
    """Predictions using the first ncomp components (all by default)."""
    ncomp = model.ncomp if ncomp is None else ncomp
    if ncomp < 1 or ncomp > model.ncomp:
        raise ModelError(f"ncomp must be between 1 and {model.ncomp}, got {ncomp}.")
    Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
    if Xnew.shape[1] != model.x_mean.size:
        raise ModelError(f"Expected {model.x_mean.size} columns, got {Xnew.shape[1]}.")
    return model.y_mean + (Xnew - model.x_mean) @ model.coefficients[:, ncomp - 1]


def fit_target(X: np.ndarray, coding: TargetCoding, ncomp: int) -> Tuple[PlsModel, ...]:
    """One PLS1 model per column of the target coding."""
    return tuple(fit_pls(X, coding.dummy[:, j], ncomp) for j in range(coding.dummy.shape[1]))


def predict_target(models: Sequence[PlsModel], Xnew: np.ndarray, ncomp: Optional[int] = None) -> np.ndarray:
    return np.column_stack([predict(m, Xnew, ncomp) for m in models])


def classify(pred: np.ndarray, coding: TargetCoding) -> np.ndarray:
    """Sign rule for two classes (0 goes to the first level), argmax otherwise."""
    if not coding.is_categorical:
        raise ModelError("Cannot classify predictions of a continuous target.")
    pred = np.asarray(pred, dtype=float)
    levels = np.asarray(coding.levels, dtype=object)
    if coding.kind == TWO_CLASS:
        return levels[(pred.reshape(pred.shape[0], -1)[:, 0] > 0).astype(int)]
    return levels[np.argmax(pred, axis=1)]


def contrast_label(coding: TargetCoding, column: int = 0) -> str:
    """What a dummy column separates: 'case vs ctrl' or 'a vs rest'."""
    if coding.kind == TWO_CLASS:
        return f"{coding.levels[1]} vs {coding.levels[0]}"
    if coding.kind == MULTI_CLASS:
        return f"{coding.levels[column]} vs rest"
    raise ModelError("Continuous targets have no class contrast.")


def majority_class_error(target: Union[TargetCoding, Sequence[str]]) -> float:
    """Error of always predicting the most frequent class."""
    labels = target.labels if isinstance(target, TargetCoding) else target
    if labels is None:
        raise ModelError("Majority class error needs a categorical target.")
    counts = Counter(labels)
    n = sum(counts.values())
    return 1.0 - max(counts.values()) / n if n else 0.0


def _fold_predictions(X: np.ndarray, coding: TargetCoding, ncomp: int, train: np.ndarray, test: np.ndarray) -> np.ndarray:
    """(len(test), ncomp, c) predictions from models fitted on the training rows."""
    out = np.empty((test.size, ncomp, coding.dummy.shape[1]))
    for j in range(coding.dummy.shape[1]):
        y = coding.dummy[train, j]
        if np.ptp(y) == 0:
            # class absent from this training segment
            out[:, :, j] = y[0]
            continue
        model = fit_pls(X[train], y, ncomp)
        for a in range(1, ncomp + 1):
            out[:, a - 1, j] = predict(model, X[test], a)
    return out


def cross_validate(X: np.ndarray, coding: TargetCoding, ncomp: int, scheme: CvScheme = CvScheme()) -> CvResult:
    """Out-of-fold predictions for 1..ncomp components.

    The error is the misclassification fraction for class targets and the
    RMSE otherwise; the selected component count follows the one standard
    error rule.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if coding.n != n:
        raise ModelError(f"Target has {coding.n} rows, X has {n}.")
    splits = scheme.splits(n, coding.labels if coding.is_categorical else None)

    folds = parallel_map(lambda split: _fold_predictions(X, coding, ncomp, *split), splits)
    predictions = np.empty((n, ncomp, coding.dummy.shape[1]))
    for (_, test), fold in zip(splits, folds):
        predictions[test] = fold

    classes = None
    if coding.is_categorical:
        classes = np.column_stack([classify(predictions[:, a, :], coding) for a in range(ncomp)])
        losses = (classes != coding.labels.reshape(-1, 1)).astype(float)
        error, se = loss_summary(losses)
    else:
        losses = (predictions[:, :, 0] - coding.dummy[:, [0]]) ** 2
        error, se = loss_summary(losses, rmse=True)

    selected = one_se_index(error, se) + 1
    log.debug("Cross-validation (%s): errors %s, selected %d components.", scheme.label, np.round(error, 4), selected)
    return CvResult(
        scheme=scheme,
        predictions=predictions,
        classes=classes,
        error=error,
        se=se,
        ncomp_selected=selected,
        n_segments=len(splits),
    )


def jackknife(X: np.ndarray, coding: TargetCoding, ncomp: int, scheme: CvScheme = CvScheme(), column: int = 0) -> np.ndarray:
    """Two-sided p-values (N x ncomp) for the regression coefficients.

    The variance of each coefficient is estimated from its spread over the
    cross-validation segment models around the full-model value,
    ((M-1)/M) * sum_m (b_m - b)^2, and tested with M-1 degrees of freedom.
    Coefficients are invariant to component sign flips, so segment models
    need no sign alignment.
    """
    X = np.asarray(X, dtype=float)
    y = coding.dummy[:, column]
    splits = scheme.splits(X.shape[0], coding.labels if coding.is_categorical else None)
    M = len(splits)
    if M < 3:
        raise ModelError(f"Jackknife needs at least 3 segments, got {M}.")

    full = fit_pls(X, y, ncomp).coefficients
    segments = parallel_map(lambda split: fit_pls(X[split[0]], y[split[0]], ncomp).coefficients, splits)
    spread = np.sum([(b - full) ** 2 for b in segments], axis=0)
    s = np.sqrt(spread * (M - 1) / M)

    p = np.ones_like(full)
    nonzero = s > 0
    t = np.abs(full[nonzero]) / s[nonzero]
    p[nonzero] = 2.0 * stats.t.sf(t, df=M - 1)
    p[~nonzero & (full != 0)] = 0.0
    return np.clip(p, 0.0, 1.0)


def smc_importance(model: PlsModel, X: np.ndarray, ncomp: int) -> np.ndarray:
    """F-like importance of each variable against the regression vector.

    Every centered column is regressed on the target-projected score
    t = X b / |b|; the importance is SSR / (SSE / (n - 2)).
    """
    if ncomp < 1 or ncomp > model.ncomp:
        raise ModelError(f"ncomp must be between 1 and {model.ncomp}, got {ncomp}.")
    b = model.coefficients[:, ncomp - 1]
    norm = float(np.linalg.norm(b))
    if norm == 0:
        raise ModelError("Regression vector is zero.")
    Xc = np.asarray(X, dtype=float) - model.x_mean
    n = Xc.shape[0]
    t = Xc @ (b / norm)
    tt = float(t @ t)
    if tt == 0:
        raise ModelError("Target-projected score is zero.")
    p = Xc.T @ t / tt
    ssr = p ** 2 * tt
    sse = np.sum((Xc - np.outer(t, p)) ** 2, axis=0)
    importance = np.zeros_like(ssr)
    positive = sse > 0
    importance[positive] = ssr[positive] / (sse[positive] / (n - 2))
    importance[~positive & (ssr > 0)] = np.inf
    return importance


def shave(
    X: np.ndarray,
    coding: TargetCoding,
    ncomp: int,
    fraction: float = 0.2,
    scheme: CvScheme = CvScheme(),
) -> ShaveResult:
    """Repeated sMC selection.

    Each step cross-validates the active variables, then drops the
    ceil(fraction * active) least important ones, until max(ncomp + 1, 2)
    remain. ``min_red`` is the first step reaching the minimal error.
    """
    if not 0 < fraction < 1:
        raise ModelError(f"Shaving fraction must be in (0, 1), got {fraction}.")
    X = np.asarray(X, dtype=float)
    floor = max(ncomp + 1, 2)
    if X.shape[1] < floor:
        raise ModelError(f"Shaving needs at least {floor} variables, got {X.shape[1]}.")

    active = np.arange(X.shape[1])
    trace: List[ShaveStep] = []
    while True:
        cv = cross_validate(X[:, active], coding, ncomp, scheme)
        trace.append(ShaveStep(tuple(int(i) for i in active), float(cv.error[ncomp - 1])))
        log.debug("Shaving step %d: %d variables, error %.4f.", len(trace) - 1, active.size, trace[-1].error)
        if active.size <= floor:
            break
        models = fit_target(X[:, active], coding, ncomp)
        importance = np.max([smc_importance(m, X[:, active], ncomp) for m in models], axis=0)
        drop = min(max(1, math.ceil(fraction * active.size)), active.size - floor)
        keep = np.sort(np.argsort(importance, kind="stable")[drop:])
        active = active[keep]

    errors = np.array([step.error for step in trace])
    min_red = int(np.flatnonzero(errors <= errors.min() + 1e-12)[0])
    return ShaveResult(trace=tuple(trace), min_red=min_red)
