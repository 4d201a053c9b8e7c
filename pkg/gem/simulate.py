"""Seeded synthetic designed datasets with known effect matrices."""

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml

from gem.errors import DesignError
from gem.ingest import CATEGORICAL, CONTINUOUS, Dataset, VariableSpec, save_dataset

log = logging.getLogger(__name__)

REPLICATE_COLUMN = "replicate"
TRUTH_SUFFIX = ".truth.json"


@dataclass(frozen=True)
class FactorSpec:
    name: str
    levels: int


@dataclass(frozen=True)
class CovariateSpec:
    """Continuous covariate drawn uniformly from [low, high)."""

    name: str
    low: float
    high: float


@dataclass(frozen=True)
class PlantedEffect:
    """Effect of one term on the responses in [first, stop).

    Factor levels sit at size * linspace(-1, 1, L), so a two-level factor gets
    -size / +size; covariates get a slope of size on the centered values;
    interactions multiply the member patterns.
    """

    term: str
    size: float
    responses: Optional[Tuple[int, int]] = None


@dataclass(frozen=True)
class SynthSpec:
    factors: Tuple[FactorSpec, ...]
    replicates: int
    n_responses: int
    noise_sd: float = 1.0
    seed: int = 0
    covariates: Tuple[CovariateSpec, ...] = ()
    effects: Tuple[PlantedEffect, ...] = ()
    baseline: float = 0.0

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        """Builds and validates a spec; problems raise ValueError."""
        if not isinstance(doc, dict):
            raise ValueError("Simulation spec must be a mapping.")
        unknown = set(doc) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"Unknown simulation spec keys: {sorted(unknown)}.")
        try:
            factors = doc.get("factors", {})
            if isinstance(factors, dict):
                factors = [{"name": k, "levels": v} for k, v in factors.items()]
            spec = cls(
                factors=tuple(FactorSpec(str(f["name"]), int(f["levels"])) for f in factors),
                replicates=int(doc.get("replicates", 1)),
                n_responses=int(doc["n_responses"]),
                noise_sd=float(doc.get("noise_sd", 1.0)),
                seed=int(doc.get("seed", 0)),
                covariates=tuple(CovariateSpec(str(c["name"]), float(c["low"]), float(c["high"])) for c in doc.get("covariates", [])),
                effects=tuple(
                    PlantedEffect(str(e["term"]), float(e["size"]), tuple(int(i) for i in e["responses"]) if e.get("responses") is not None else None)
                    for e in doc.get("effects", [])
                ),
                baseline=float(doc.get("baseline", 0.0)),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"Malformed simulation spec: {exc}.")
        spec.validate()
        return spec

    def validate(self):
        if not self.factors:
            raise ValueError("Simulation spec needs at least one factor.")
        names = [f.name for f in self.factors] + [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise ValueError("Factor and covariate names must be unique.")
        if any(f.levels < 2 for f in self.factors):
            raise ValueError("Every factor needs at least 2 levels.")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1.")
        if self.n_responses < 1:
            raise ValueError("n_responses must be at least 1.")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative.")
        if any(c.high < c.low for c in self.covariates):
            raise ValueError("Covariate ranges need low <= high.")
        for effect in self.effects:
            members = effect.term.split(":")
            missing = [m for m in members if m not in names]
            if missing:
                raise ValueError(f"Effect term '{effect.term}' names unknown variables {missing}.")
            if effect.responses is not None:
                first, stop = effect.responses
                if not 0 <= first < stop <= self.n_responses:
                    raise ValueError(f"Response block {effect.responses} of '{effect.term}' is outside 0..{self.n_responses}.")


@dataclass(frozen=True, eq=False)
class SyntheticData:
    dataset: Dataset
    spec: SynthSpec
    truth: Dict[str, np.ndarray] = field(default_factory=dict)
    supports: Dict[str, Tuple[int, ...]] = field(default_factory=dict)


def level_labels(count: int) -> List[str]:
    """L1, L2, ... zero-padded so that sorting keeps the numeric order."""
    width = len(str(count))
    return [f"L{i + 1:0{width}d}" for i in range(count)]


def generate_balanced_design(levels: Sequence[int], reps: int, names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Full crossing of the factors times replicates.

    Rows are ordered with the first factor varying slowest and the replicate
    fastest.
    """
    if not levels:
        raise DesignError("At least one factor is required.")
    if any(count < 2 for count in levels):
        raise DesignError(f"Every factor needs at least 2 levels, got {list(levels)}.")
    if reps < 1:
        raise DesignError(f"Replicates must be at least 1, got {reps}.")
    names = list(names) if names is not None else [f"f{i + 1}" for i in range(len(levels))]
    if len(names) != len(levels):
        raise DesignError(f"Got {len(names)} factor names for {len(levels)} factors.")

    rows = product(*(level_labels(count) for count in levels), range(1, reps + 1))
    return pd.DataFrame(list(rows), columns=names + [REPLICATE_COLUMN])


def _unit_pattern(name: str, skeleton: pd.DataFrame, spec: SynthSpec, covariates: Dict[str, np.ndarray]) -> np.ndarray:
    if name in covariates:
        values = covariates[name]
        return values - values.mean()
    count = next(f.levels for f in spec.factors if f.name == name)
    offsets = np.linspace(-1.0, 1.0, count)
    index = {label: i for i, label in enumerate(level_labels(count))}
    return offsets[[index[label] for label in skeleton[name]]]


def plant_effects(spec: SynthSpec) -> SyntheticData:
    """Y = baseline + sum of planted term effects + N(0, noise_sd^2) noise.

    Covariates are drawn before the noise from a PCG64 generator seeded with
    ``spec.seed``.
    """
    spec.validate()
    skeleton = generate_balanced_design([f.levels for f in spec.factors], spec.replicates, [f.name for f in spec.factors])
    n, N = len(skeleton), spec.n_responses
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    covariates = {c.name: rng.uniform(c.low, c.high, n) for c in spec.covariates}
    noise = spec.noise_sd * rng.standard_normal((n, N))

    truth: Dict[str, np.ndarray] = {}
    supports: Dict[str, Tuple[int, ...]] = {}
    for effect in spec.effects:
        pattern = np.ones(n)
        for member in effect.term.split(":"):
            pattern = pattern * _unit_pattern(member, skeleton, spec, covariates)
        first, stop = effect.responses if effect.responses is not None else (0, N)
        mask = np.zeros(N)
        mask[first:stop] = 1.0
        truth[effect.term] = truth.get(effect.term, np.zeros((n, N))) + effect.size * np.outer(pattern, mask)
        supports[effect.term] = tuple(sorted(set(supports.get(effect.term, ())) | set(range(first, stop))))

    Y = spec.baseline + noise
    for matrix in truth.values():
        Y = Y + matrix

    width = len(str(N))
    variables = [VariableSpec(f.name, CATEGORICAL, skeleton[f.name].to_numpy(dtype=object)) for f in spec.factors]
    variables += [VariableSpec(c.name, CONTINUOUS, covariates[c.name]) for c in spec.covariates]
    dataset = Dataset(
        Y=Y,
        response_names=tuple(f"y{j + 1:0{width}d}" for j in range(N)),
        sample_ids=tuple(f"s{i + 1:0{len(str(n))}d}" for i in range(n)),
        variables=tuple(variables),
    )
    log.debug("Simulated %d samples x %d responses with %d planted effects (seed %d).", n, N, len(spec.effects), spec.seed)
    return SyntheticData(dataset=dataset, spec=spec, truth=truth, supports=supports)


def load_synth_spec(path: str) -> SynthSpec:
    if not os.path.isfile(path):
        raise ValueError(f"Simulation spec '{path}' does not exist.")
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ValueError(f"Cannot parse simulation spec '{path}': {exc}")
    return SynthSpec.from_dict(doc)


def truth_path(data_path: str) -> str:
    """data.csv -> data.truth.json"""
    root, _ = os.path.splitext(data_path)
    return root + TRUTH_SUFFIX


def save_synthetic(sim: SyntheticData, path: str) -> str:
    """Writes the dataset CSV and its ground-truth sidecar; returns the sidecar path."""
    save_dataset(sim.dataset, path)
    sidecar = truth_path(path)
    doc = {
        "spec": asdict(sim.spec),
        "supports": {term: list(indices) for term, indices in sim.supports.items()},
        "truth": {term: matrix.tolist() for term, matrix in sim.truth.items()},
    }
    with open(sidecar, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f)
    return sidecar
