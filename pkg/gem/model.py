import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from gem.design import RANK_TOL, CodedDesign, ModelSpec, Term, TermLike, build_design
from gem.errors import DesignError, ModelError
from gem.ingest import Dataset

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GemFit:
    """Effect decomposition Y = 1*mu + sum_d E_d + R of a response matrix."""

    spec: ModelSpec
    design: CodedDesign
    mu: np.ndarray
    beta: Dict[Term, np.ndarray]
    effects: Dict[Term, np.ndarray]
    residuals: np.ndarray
    response_names: Tuple[str, ...] = ()
    sample_ids: Tuple[str, ...] = ()

    @property
    def shape(self) -> Tuple[int, int]:
        return self.residuals.shape

    def term(self, term: TermLike) -> Term:
        return self.spec.term(term)


def readonly(a: np.ndarray) -> np.ndarray:
    """Marks an array read-only and returns it."""
    a.flags.writeable = False
    return a


def fit_gem(design: CodedDesign, Y: np.ndarray, response_names=(), sample_ids=()) -> GemFit:
    """Least-squares fit of every response column on one QR factorization of X."""
    Y = np.asarray(Y, dtype=float)
    X = design.X
    if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise ModelError(f"Response matrix has {Y.shape[0]} rows, design has {X.shape[0]}.")
    if not np.all(np.isfinite(Y)):
        raise ModelError("Response matrix contains non-finite values.")

    Q, R = linalg.qr(X, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.min() < RANK_TOL * diag.max():
        raise DesignError("Design matrix is rank deficient.")
    B = linalg.solve_triangular(R, Q.T @ Y)

    mu = readonly(B[0].copy())
    beta, effects = {}, {}
    fitted = np.tile(mu, (X.shape[0], 1))
    for term in design.terms:
        cols = design.blocks[term]
        beta[term] = readonly(B[cols].copy())
        effects[term] = readonly(X[:, cols] @ B[cols])
        fitted += effects[term]
    residuals = readonly(Y - fitted)

    log.debug("Fitted %d responses on %d design columns.", Y.shape[1], X.shape[1])
    return GemFit(
        spec=design.spec,
        design=design,
        mu=mu,
        beta=beta,
        effects=effects,
        residuals=residuals,
        response_names=tuple(response_names),
        sample_ids=tuple(sample_ids),
    )


def effect_matrix(fit: GemFit, term: TermLike) -> np.ndarray:
    return fit.effects[fit.term(term)]


def er_matrix(fit: GemFit, term: TermLike) -> np.ndarray:
    """Effect plus residual matrix of one term."""
    return effect_matrix(fit, term) + fit.residuals


def combined_er(fit: GemFit, terms: Iterable[TermLike]) -> np.ndarray:
    """Sum of the effect matrices of several terms plus the residuals."""
    resolved = list(dict.fromkeys(fit.term(t) for t in terms))
    if not resolved:
        raise ModelError("At least one term is required for a combined ER matrix.")
    out = fit.residuals.copy()
    for term in resolved:
        out += fit.effects[term]
    return out


def reconstruct(fit: GemFit) -> np.ndarray:
    out = np.tile(fit.mu, (fit.shape[0], 1))
    for term in fit.spec.terms:
        out += fit.effects[term]
    return out + fit.residuals


def variance_summary(fit: GemFit) -> pd.DataFrame:
    """Share of the centered total sum of squares carried by each term.

    For balanced designs the effect matrices and residuals are orthogonal and
    the shares add up to one; otherwise the ``overlap`` row holds the
    difference.
    """
    Y = reconstruct(fit)
    centered = Y - Y.mean(axis=0)
    total = float(np.sum(centered ** 2))
    rows = []
    for term in fit.spec.terms:
        ss = float(np.sum(fit.effects[term] ** 2))
        rows.append((term.label, ss, ss / total if total > 0 else 0.0))
    ss_res = float(np.sum(fit.residuals ** 2))
    rows.append(("residual", ss_res, ss_res / total if total > 0 else 0.0))
    shares = sum(r[2] for r in rows)
    rows.append(("overlap", total * (1.0 - shares), (1.0 - shares) if total > 0 else 0.0))
    return pd.DataFrame(rows, columns=["term", "sum_of_squares", "fraction"])


def fit_dataset(spec: ModelSpec, d: Dataset, center_continuous: bool = True) -> GemFit:
    """Builds the design for a dataset and fits it."""
    design = build_design(spec, d, center_continuous=center_continuous)
    return fit_gem(design, d.Y, response_names=d.response_names, sample_ids=d.sample_ids)
