import logging
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from gem.errors import DataError

log = logging.getLogger(__name__)

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"
KINDS = (CATEGORICAL, CONTINUOUS)
MISSING_TOKENS = {"", "NA", "N/A", "NaN", "nan", "NULL", "null", "None", "."}
ID_COLUMN = "sample_id"


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, copy=True)
    values.flags.writeable = False
    return values


@dataclass(frozen=True, eq=False)
class VariableSpec:
    """A typed input variable with one value per sample.

    Categorical values are kept as strings; ``levels`` is the sorted level
    list used for coding and may contain levels no sample carries (after row
    filtering). Continuous values are finite floats.
    """

    name: str
    kind: str
    values: np.ndarray
    levels: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"Variable '{self.name}' has unknown kind '{self.kind}'.")
        if self.kind == CATEGORICAL:
            values = np.asarray([str(v) for v in self.values], dtype=object)
            levels = tuple(self.levels) if self.levels else tuple(sorted(set(values)))
            if len(set(levels)) != len(levels):
                raise DataError(f"Variable '{self.name}' has duplicate levels.")
            if len(levels) < 2:
                raise DataError(f"Categorical variable '{self.name}' needs at least 2 levels, found {len(levels)}.")
            unknown = sorted(set(values) - set(levels))
            if unknown:
                raise DataError(f"Variable '{self.name}' has values outside its levels: {unknown}.")
            object.__setattr__(self, "levels", levels)
        else:
            values = np.asarray(self.values, dtype=float)
            if not np.all(np.isfinite(values)):
                raise DataError(f"Continuous variable '{self.name}' contains non-finite values.")
            object.__setattr__(self, "levels", ())
        object.__setattr__(self, "values", _frozen(values))

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def take(self, rows: np.ndarray) -> "VariableSpec":
        return VariableSpec(self.name, self.kind, self.values[rows], self.levels)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Samples-by-responses matrix plus the typed sample variables."""

    Y: np.ndarray
    response_names: Tuple[str, ...]
    sample_ids: Tuple[str, ...]
    variables: Tuple[VariableSpec, ...] = ()

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim != 2:
            raise DataError("Response matrix must be two-dimensional.")
        n, N = Y.shape
        if n < 3:
            raise DataError(f"At least 3 samples are required, found {n}.")
        if N < 1:
            raise DataError("At least one response is required.")
        if not np.all(np.isfinite(Y)):
            row, col = np.argwhere(~np.isfinite(Y))[0]
            raise DataError(f"Non-finite response at ({row + 1}, {self.response_names[col]}).")
        if len(self.response_names) != N:
            raise DataError(f"Expected {N} response names, got {len(self.response_names)}.")
        if len(self.sample_ids) != n:
            raise DataError(f"Expected {n} sample ids, got {len(self.sample_ids)}.")
        duplicates = [k for k, c in Counter(self.sample_ids).items() if c > 1]
        if duplicates:
            raise DataError(f"Duplicate sample id '{duplicates[0]}'.")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise DataError("Duplicate variable names.")
        for var in self.variables:
            if len(var.values) != n:
                raise DataError(f"Variable '{var.name}' has {len(var.values)} values, expected {n}.")
        object.__setattr__(self, "Y", _frozen(Y))
        object.__setattr__(self, "response_names", tuple(str(r) for r in self.response_names))
        object.__setattr__(self, "sample_ids", tuple(str(s) for s in self.sample_ids))
        object.__setattr__(self, "variables", tuple(self.variables))

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def N(self) -> int:
        return self.Y.shape[1]

    def variable(self, name: str) -> VariableSpec:
        for var in self.variables:
            if var.name == name:
                return var
        raise DataError(f"Unknown variable '{name}'.")

    def subset(self, rows: Sequence[int]) -> "Dataset":
        """Row-filtered copy; declared factor levels are kept."""
        rows = np.asarray(rows, dtype=int)
        return Dataset(
            Y=self.Y[rows],
            response_names=self.response_names,
            sample_ids=tuple(self.sample_ids[i] for i in rows),
            variables=tuple(v.take(rows) for v in self.variables),
        )

    def with_responses(self, Y: np.ndarray, response_names: Optional[Sequence[str]] = None) -> "Dataset":
        return Dataset(
            Y=Y,
            response_names=tuple(response_names) if response_names is not None else self.response_names,
            sample_ids=self.sample_ids,
            variables=self.variables,
        )


@dataclass
class Schema:
    """Column roles of a CSV file.

    ``responses`` is a list of column names, a ``first:last`` column range
    (inclusive, by position) or a name prefix. ``variables`` maps a column to
    ``categorical``, ``continuous`` or ``auto``; when empty every remaining
    column is loaded with an inferred kind.
    """

    responses: Union[str, List[str]]
    id_column: Optional[str] = None
    variables: Dict[str, str] = field(default_factory=dict)

    def response_columns(self, columns: Sequence[str]) -> List[str]:
        columns = list(columns)
        if not isinstance(self.responses, str):
            missing = [c for c in self.responses if c not in columns]
            if missing:
                raise DataError(f"Response columns not found: {missing}.")
            return list(self.responses)
        spec = self.responses.strip()
        if ":" in spec:
            first, last = (part.strip() for part in spec.split(":", 1))
            if first not in columns or last not in columns:
                raise DataError(f"Response range '{spec}' does not match the header.")
            i, j = columns.index(first), columns.index(last)
            if j < i:
                raise DataError(f"Response range '{spec}' is reversed.")
            return columns[i:j + 1]
        selected = [c for c in columns if c.startswith(spec) and c != self.id_column]
        if not selected:
            raise DataError(f"No response columns start with '{spec}'.")
        return selected


@dataclass(frozen=True)
class ValidationReport:
    zero_variance_responses: Tuple[str, ...]
    constant_variables: Tuple[str, ...]
    level_counts: Dict[str, Dict[str, int]]
    empty_levels: Tuple[Tuple[str, str], ...]
    balance: Dict[Tuple[str, ...], int]
    balanced: bool

    @property
    def ok(self) -> bool:
        return not (self.zero_variance_responses or self.constant_variables or self.empty_levels)


def _is_missing(cell: str) -> bool:
    return cell.strip() in MISSING_TOKENS


def _parse_numeric(column: pd.Series, name: str) -> np.ndarray:
    values = np.empty(len(column), dtype=float)
    for row, cell in enumerate(column):
        if _is_missing(cell):
            raise DataError(f"missing value at ({row + 1}, {name})")
        try:
            values[row] = float(cell)
        except ValueError:
            raise DataError(f"non-numeric value '{cell}' at ({row + 1}, {name})")
        if not math.isfinite(values[row]):
            raise DataError(f"non-finite value '{cell}' at ({row + 1}, {name})")
    return values


def _looks_numeric(column: pd.Series) -> bool:
    try:
        [float(cell) for cell in column]
    except ValueError:
        return False
    return True


def load_dataset(path: str, schema: Schema) -> Dataset:
    """Reads a UTF-8, comma separated file with a header row into a Dataset."""
    if not os.path.isfile(path):
        raise DataError(f"Data file '{path}' does not exist.")

    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    columns = [str(c) for c in frame.columns]
    if schema.id_column and schema.id_column not in columns:
        raise DataError(f"Id column '{schema.id_column}' not found.")

    responses = schema.response_columns(columns)
    Y = np.column_stack([_parse_numeric(frame[c], c) for c in responses])

    if schema.id_column:
        ids = [cell.strip() for cell in frame[schema.id_column]]
        for row, cell in enumerate(ids):
            if not cell:
                raise DataError(f"missing value at ({row + 1}, {schema.id_column})")
    else:
        ids = [str(i + 1) for i in range(len(frame))]

    roles = dict(schema.variables)
    if not roles:
        roles = {c: "auto" for c in columns if c not in responses and c != schema.id_column}

    variables = []
    for name, kind in roles.items():
        if name not in columns:
            raise DataError(f"Variable column '{name}' not found.")
        column = frame[name]
        for row, cell in enumerate(column):
            if _is_missing(cell):
                raise DataError(f"missing value at ({row + 1}, {name})")
        if kind == "auto":
            kind = CONTINUOUS if _looks_numeric(column) else CATEGORICAL
        if kind == CONTINUOUS:
            variables.append(VariableSpec(name, CONTINUOUS, _parse_numeric(column, name)))
        elif kind == CATEGORICAL:
            labels = [cell.strip() for cell in column]
            appearance = list(dict.fromkeys(labels))
            log.debug("Variable '%s' levels in order of appearance: %s", name, appearance)
            variables.append(VariableSpec(name, CATEGORICAL, np.asarray(labels, dtype=object), tuple(sorted(appearance))))
        else:
            raise DataError(f"Unknown kind '{kind}' for variable '{name}'.")

    dataset = Dataset(Y=Y, response_names=tuple(responses), sample_ids=tuple(ids), variables=tuple(variables))
    log.info("Loaded %d samples x %d responses with %d variables from '%s'.", dataset.n, dataset.N, len(variables), path)
    return dataset


def save_dataset(d: Dataset, path: str):
    """Writes the dataset in the layout load_dataset reads (17 significant digits)."""
    columns = {ID_COLUMN: list(d.sample_ids)}
    for var in d.variables:
        if var.is_categorical:
            columns[var.name] = list(var.values)
        else:
            columns[var.name] = [format(v, ".17g") for v in var.values]
    for j, name in enumerate(d.response_names):
        columns[name] = [format(v, ".17g") for v in d.Y[:, j]]
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    pd.DataFrame(columns).to_csv(path, index=False, lineterminator="\n")


def dataset_schema(d: Dataset) -> Schema:
    """Schema that reloads a file written by save_dataset with the same kinds."""
    return Schema(
        responses=list(d.response_names),
        id_column=ID_COLUMN,
        variables={v.name: v.kind for v in d.variables},
    )


def validate_dataset(d: Dataset) -> ValidationReport:
    """Reports degenerate responses/variables and the factor balance table."""
    spread = np.ptp(d.Y, axis=0)
    zero_variance = tuple(name for name, s in zip(d.response_names, spread) if s == 0)

    constant = []
    level_counts: Dict[str, Dict[str, int]] = {}
    empty = []
    factors = [v for v in d.variables if v.is_categorical]
    for var in d.variables:
        if var.is_categorical:
            counts = Counter(var.values)
            level_counts[var.name] = {level: counts.get(level, 0) for level in var.levels}
            empty.extend((var.name, level) for level in var.levels if counts.get(level, 0) == 0)
            if len(counts) < 2:
                constant.append(var.name)
        elif np.ptp(var.values) == 0:
            constant.append(var.name)

    balance: Dict[Tuple[str, ...], int] = {}
    if factors:
        cells = Counter(zip(*(v.values for v in factors)))
        for combo in product(*(v.levels for v in factors)):
            balance[combo] = cells.get(combo, 0)
    balanced = bool(balance) and len(set(balance.values())) == 1 and next(iter(balance.values())) > 0

    return ValidationReport(
        zero_variance_responses=zero_variance,
        constant_variables=tuple(constant),
        level_counts=level_counts,
        empty_levels=tuple(empty),
        balance=balance,
        balanced=balanced,
    )


def preprocess(d: Dataset, log_transform: bool = False, center: bool = False) -> Dataset:
    """Optional response transforms applied before the effect decomposition."""
    Y = np.array(d.Y, dtype=float)
    if log_transform:
        if np.any(Y <= 0):
            row, col = np.argwhere(Y <= 0)[0]
            raise DataError(f"log transform needs positive responses, found {Y[row, col]} at ({row + 1}, {d.response_names[col]})")
        Y = np.log(Y)
    if center:
        Y = Y - Y.mean(axis=0)
    if not (log_transform or center):
        return d
    return d.with_responses(Y)

