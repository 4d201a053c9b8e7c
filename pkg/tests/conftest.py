from pathlib import Path
from typing import Sequence

import numpy as np
import pytest

from gem.ingest import CATEGORICAL, CONTINUOUS, Dataset, VariableSpec
from gem.simulate import generate_balanced_design


def balanced_dataset(
    levels: Sequence[int] = (2, 2),
    reps: int = 3,
    n_responses: int = 6,
    seed: int = 0,
    names: Sequence[str] = ("a", "b"),
    covariate: bool = False,
) -> Dataset:
    """Full factorial design with standard normal responses."""
    skeleton = generate_balanced_design(list(levels), reps, list(names)[: len(levels)])
    rng = np.random.default_rng(seed)
    variables = [VariableSpec(name, CATEGORICAL, skeleton[name].to_numpy(dtype=object)) for name in list(names)[: len(levels)]]
    if covariate:
        variables.append(VariableSpec("age", CONTINUOUS, rng.uniform(20, 70, len(skeleton))))
    return Dataset(
        Y=rng.standard_normal((len(skeleton), n_responses)),
        response_names=tuple(f"y{j + 1}" for j in range(n_responses)),
        sample_ids=tuple(f"s{i + 1}" for i in range(len(skeleton))),
        variables=tuple(variables),
    )


@pytest.fixture
def layout_2x2_dataset() -> Dataset:
    return balanced_dataset((2, 2), 3, n_responses=5, seed=1)


@pytest.fixture
def layout_2x3_dataset() -> Dataset:
    return balanced_dataset((2, 3), 2, n_responses=4, seed=2)


@pytest.fixture
def two_class_csv(tmp_path: Path) -> Path:
    """Small two-factor CSV with a separable effect of factor 'group'."""
    rng = np.random.default_rng(5)
    lines = ["id,group,batch," + ",".join(f"m{j + 1}" for j in range(8))]
    row = 0
    for group in ("ctrl", "case"):
        for batch in ("b1", "b2"):
            for _ in range(4):
                row += 1
                shift = 1.5 if group == "case" else -1.5
                values = rng.standard_normal(8)
                values[:3] += shift
                lines.append(f"s{row},{group},{batch}," + ",".join(f"{v:.6f}" for v in values))
    path = tmp_path / "two_class.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
