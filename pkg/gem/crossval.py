import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import KFold, LeaveOneOut, StratifiedKFold

from gem.errors import ModelError

log = logging.getLogger(__name__)

Split = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class CvScheme:
    """Leave-one-out or seeded k-fold cross-validation."""

    kind: str = "loo"
    k: int = 0
    seed: int = 0

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "CvScheme":
        """Accepts 'loo' or 'kfold:K'."""
        text = text.strip().lower()
        if text == "loo":
            return cls("loo", 0, seed)
        if text.startswith("kfold:"):
            try:
                k = int(text.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"Invalid fold count in '{text}'.")
            if k < 2:
                raise ValueError(f"k-fold needs k >= 2, got {k}.")
            return cls("kfold", k, seed)
        raise ValueError(f"Unknown cross-validation scheme '{text}' (use 'loo' or 'kfold:K').")

    @property
    def label(self) -> str:
        return "loo" if self.kind == "loo" else f"kfold:{self.k}"

    def splits(self, n: int, labels: Optional[Sequence] = None) -> List[Split]:
        """Train/test index pairs; k-fold is stratified on labels when possible."""
        placeholder = np.zeros((n, 1))
        if self.kind == "loo":
            return [(train, test) for train, test in LeaveOneOut().split(placeholder)]
        if not 2 <= self.k <= n:
            raise ModelError(f"k-fold needs 2 <= k <= n, got k={self.k}, n={n}.")
        if labels is not None:
            _, counts = np.unique(np.asarray(labels), return_counts=True)
            if counts.min() >= self.k:
                folds = StratifiedKFold(n_splits=self.k, shuffle=True, random_state=self.seed)
                return [(train, test) for train, test in folds.split(placeholder, np.asarray(labels))]
            log.warning("Stratified %d-fold split impossible (smallest class has %d samples); using plain k-fold.", self.k, counts.min())
        folds = KFold(n_splits=self.k, shuffle=True, random_state=self.seed)
        return [(train, test) for train, test in folds.split(placeholder)]


def one_se_index(error: np.ndarray, se: np.ndarray) -> int:
    """First index whose error is within one standard error of the minimum."""
    best = int(np.argmin(error))
    threshold = error[best] + se[best]
    return int(np.flatnonzero(error <= threshold)[0])


def loss_summary(losses: np.ndarray, rmse: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over samples of an (n, m) loss matrix.

    With ``rmse`` the losses are squared errors and the returned error is the
    root mean square, its standard error by the delta method.
    """
    n = losses.shape[0]
    mean = losses.mean(axis=0)
    se = losses.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    if not rmse:
        return mean, se
    root = np.sqrt(mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        se_root = np.where(root > 0, se / (2.0 * root), 0.0)
    return root, se_root
