import re
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from gem.errors import DesignError, FormulaError
from gem.ingest import Dataset

NAME = r"[A-Za-z_.][A-Za-z0-9_.]*"
TERM_RE = re.compile(rf"^{NAME}(:{NAME})*$")
RANK_TOL = 1e-10
INTERCEPT = "(Intercept)"


@dataclass(frozen=True)
class Term:
    """A main effect (one variable) or an interaction (two or more)."""

    variables: Tuple[str, ...]

    @classmethod
    def parse(cls, text: str) -> "Term":
        text = re.sub(r"\s+", "", text)
        if not TERM_RE.match(text):
            raise FormulaError(f"Invalid term '{text}'.")
        members = tuple(text.split(":"))
        if len(set(members)) != len(members):
            raise FormulaError(f"Interaction '{text}' repeats a variable.")
        return cls(members)

    @property
    def is_interaction(self) -> bool:
        return len(self.variables) > 1

    @property
    def label(self) -> str:
        return ":".join(self.variables)

    def __str__(self) -> str:
        return self.label


TermLike = Union[Term, str]


@dataclass(frozen=True)
class ModelSpec:
    response: str
    terms: Tuple[Term, ...]

    def __post_init__(self):
        if not self.terms:
            raise FormulaError("Model has no terms.")
        seen = set()
        for term in self.terms:
            key = frozenset(term.variables)
            if key in seen:
                raise FormulaError(f"Duplicate term '{term.label}'.")
            seen.add(key)

    @property
    def variables(self) -> List[str]:
        return list(dict.fromkeys(v for term in self.terms for v in term.variables))

    @property
    def formula(self) -> str:
        return f"{self.response} ~ " + " + ".join(t.label for t in self.terms)

    def term(self, term: TermLike) -> Term:
        """Resolves a label such as 'b:a' to the matching model term."""
        wanted = Term.parse(term) if isinstance(term, str) else term
        for candidate in self.terms:
            if frozenset(candidate.variables) == frozenset(wanted.variables):
                return candidate
        raise DesignError(f"Unknown term '{wanted.label}' (model terms: {', '.join(t.label for t in self.terms)}).")


def parse_formula(text: str) -> ModelSpec:
    """Parses 'response ~ a + b + a:b'."""
    if text.count("~") != 1:
        raise FormulaError(f"Formula '{text}' must contain exactly one '~'.")
    lhs, rhs = (part.strip() for part in text.split("~"))
    if not re.fullmatch(NAME, lhs):
        raise FormulaError(f"Invalid response name '{lhs}'.")
    if not rhs:
        raise FormulaError("Formula has an empty right-hand side.")
    pieces = rhs.split("+")
    if any(not p.strip() for p in pieces):
        raise FormulaError(f"Formula '{text}' has an empty term.")
    return ModelSpec(response=lhs, terms=tuple(Term.parse(p) for p in pieces))


def code_factor(labels: Sequence[str], levels: Optional[Sequence[str]] = None) -> np.ndarray:
    """Sum coding of a factor, n x (L-1).

    The first level is coded -1 in every column; level j (1-based, j >= 2)
    gets +1 in column L-j+1 and 0 elsewhere. For L=2 this is the familiar
    -1/+1 column; for L=3 level 2 maps to (0, 1) and level 3 to (1, 0).
    """
    labels = [str(v) for v in labels]
    levels = list(levels) if levels is not None else sorted(set(labels))
    L = len(levels)
    if L < 2:
        raise DesignError(f"A factor needs at least 2 levels, found {L}.")
    index = {level: j for j, level in enumerate(levels)}
    block = np.zeros((len(labels), L - 1))
    for row, label in enumerate(labels):
        if label not in index:
            raise DesignError(f"Label '{label}' is not one of the levels {levels}.")
        j = index[label]
        if j == 0:
            block[row, :] = -1.0
        else:
            block[row, L - 1 - j] = 1.0
    return block


def interaction_block(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All column products, ordered a-column major, b-column minor."""
    a = np.atleast_2d(np.asarray(a, dtype=float).T).T
    b = np.atleast_2d(np.asarray(b, dtype=float).T).T
    if a.shape[0] != b.shape[0]:
        raise DesignError(f"Blocks have different row counts ({a.shape[0]} vs {b.shape[0]}).")
    return np.einsum("ni,nj->nij", a, b).reshape(a.shape[0], -1)


@dataclass(frozen=True, eq=False)
class CodedDesign:
    """Intercept column followed by one coded block per model term."""

    X: np.ndarray
    spec: ModelSpec
    blocks: Dict[Term, slice]
    column_names: Tuple[str, ...]
    levels: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    centers: Dict[str, float] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def terms(self) -> Tuple[Term, ...]:
        return self.spec.terms

    def block(self, term: Term) -> np.ndarray:
        return self.X[:, self.blocks[term]]

    def width(self, term: Term) -> int:
        s = self.blocks[term]
        return s.stop - s.start


def _rank_ok(X: np.ndarray) -> bool:
    if X.shape[1] > X.shape[0]:
        return False
    s = np.linalg.svd(X, compute_uv=False)
    return s[-1] >= RANK_TOL * s[0]


def _variable_block(d: Dataset, name: str, center: bool) -> Tuple[np.ndarray, Optional[float]]:
    var = d.variable(name)
    if var.is_categorical:
        return code_factor(var.values, var.levels), None
    values = np.asarray(var.values, dtype=float)
    mean = float(values.mean()) if center else 0.0
    return (values - mean).reshape(-1, 1), mean


def _block_names(term: Term, d: Dataset) -> List[str]:
    parts = []
    for name in term.variables:
        var = d.variable(name)
        if var.is_categorical:
            # column c of a sum-coded block carries +1 for level L-c (1-based)
            L = len(var.levels)
            parts.append([f"{name}[{var.levels[L - 1 - c]}]" for c in range(L - 1)])
        else:
            parts.append([name])
    return reduce(lambda acc, nxt: [f"{x}:{y}" for x in acc for y in nxt], parts)


def build_design(spec: ModelSpec, d: Dataset, center_continuous: bool = True) -> CodedDesign:
    """Builds the sum-coded design matrix for spec on dataset d."""
    known = {v.name for v in d.variables}
    for name in spec.variables:
        if name not in known:
            raise DesignError(f"Unknown variable '{name}' in formula '{spec.formula}'.")

    cache = {}
    levels, centers = {}, {}
    for name in spec.variables:
        block, center = _variable_block(d, name, center_continuous)
        cache[name] = block
        var = d.variable(name)
        if var.is_categorical:
            levels[name] = var.levels
        else:
            centers[name] = center

    columns = [np.ones((d.n, 1))]
    names = [INTERCEPT]
    blocks = {}
    start = 1
    for term in spec.terms:
        if term.is_interaction:
            kinds = [d.variable(v).is_categorical for v in term.variables]
            if sum(not k for k in kinds) > 1:
                raise DesignError(f"Interaction '{term.label}' between continuous variables is not supported.")
        block = reduce(interaction_block, (cache[v] for v in term.variables))
        columns.append(block)
        names.extend(_block_names(term, d))
        blocks[term] = slice(start, start + block.shape[1])
        start += block.shape[1]
        if not _rank_ok(np.hstack(columns)):
            raise DesignError(f"Design is rank deficient: term '{term.label}' is aliased with earlier terms.")

    X = np.hstack(columns)
    X.flags.writeable = False
    return CodedDesign(
        X=X,
        spec=spec,
        blocks=blocks,
        column_names=tuple(names),
        levels=levels,
        centers=centers,
    )
