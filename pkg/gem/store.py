import json
import os
from typing import Optional

import numpy as np

from gem.design import CodedDesign, parse_formula
from gem.errors import DataError
from gem.model import GemFit, readonly

SCHEMA_VERSION = 1
FIT_FILE = "gemfit.json"


def _rows(a: np.ndarray) -> list:
    return np.asarray(a, dtype=float).tolist()


def save_fit(fit: GemFit, path: str, embed_matrices: bool = False):
    """Writes a GemFit as JSON; effect and residual matrices only on request."""
    design = fit.design
    doc = {
        "schema_version": SCHEMA_VERSION,
        "formula": fit.spec.formula,
        "terms": [t.label for t in fit.spec.terms],
        "levels": {name: list(levels) for name, levels in design.levels.items()},
        "centers": dict(design.centers),
        "column_names": list(design.column_names),
        "blocks": {t.label: [design.blocks[t].start, design.blocks[t].stop] for t in fit.spec.terms},
        "design": _rows(design.X),
        "response_names": list(fit.response_names),
        "sample_ids": list(fit.sample_ids),
        "mu": _rows(fit.mu),
        "beta": {t.label: _rows(fit.beta[t]) for t in fit.spec.terms},
    }
    if embed_matrices:
        doc["residuals"] = _rows(fit.residuals)
        doc["effects"] = {t.label: _rows(fit.effects[t]) for t in fit.spec.terms}

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_fit(path: str, Y: Optional[np.ndarray] = None) -> GemFit:
    """Reads a fit written by save_fit.

    Residuals come from the file when embedded, otherwise they are recomputed
    from the response matrix Y the fit was made on.
    """
    if not os.path.exists(path):
        raise DataError(f"Fit file '{path}' does not exist.")
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"Unsupported fit schema version {doc.get('schema_version')!r}.")

    spec = parse_formula(doc["formula"])
    X = np.asarray(doc["design"], dtype=float)
    X.flags.writeable = False
    blocks = {spec.term(label): slice(*doc["blocks"][label]) for label in doc["terms"]}
    design = CodedDesign(
        X=X,
        spec=spec,
        blocks=blocks,
        column_names=tuple(doc["column_names"]),
        levels={k: tuple(v) for k, v in doc["levels"].items()},
        centers=dict(doc["centers"]),
    )

    mu = readonly(np.asarray(doc["mu"], dtype=float))
    beta = {spec.term(label): readonly(np.asarray(rows, dtype=float).reshape(-1, mu.size)) for label, rows in doc["beta"].items()}
    effects = {term: readonly(X[:, design.blocks[term]] @ beta[term]) for term in spec.terms}

    if "residuals" in doc:
        residuals = np.asarray(doc["residuals"], dtype=float)
    elif Y is not None:
        Y = np.asarray(Y, dtype=float)
        if Y.shape != (X.shape[0], mu.size):
            raise DataError(f"Response matrix shape {Y.shape} does not match the stored fit {(X.shape[0], mu.size)}.")
        residuals = Y - mu - sum(effects.values())
    else:
        raise DataError("Fit file has no embedded residuals; pass the response matrix to recompute them.")

    return GemFit(
        spec=spec,
        design=design,
        mu=mu,
        beta=beta,
        effects=effects,
        residuals=readonly(residuals),
        response_names=tuple(doc["response_names"]),
        sample_ids=tuple(doc["sample_ids"]),
    )
