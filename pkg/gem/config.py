import json
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, List, Optional

import yaml

from gem.crossval import CvScheme

CONFIG_FILE_NAME = "gem.yaml"
ANALYSES = ("pca", "pls", "enet")
FAMILIES = ("gaussian", "binomial")


@dataclass
class RunConfig:
    data: Optional[str] = None
    responses: Optional[str] = None
    id_column: Optional[str] = None
    categorical: List[str] = None
    continuous: List[str] = None
    model: Optional[str] = None
    fit: Optional[str] = None
    effects: List[str] = None
    analysis: str = "pls"
    ncomp: int = 2
    cv: str = "loo"
    alpha: float = 0.5
    family: Optional[str] = None
    nlambda: int = 100
    shave: bool = False
    shave_fraction: float = 0.2
    jackknife: bool = False
    seed: int = 0
    out: str = "gem_out"
    log: bool = False
    center: bool = False
    scale: bool = False
    add_intercept: bool = False
    embed_matrices: bool = False
    export_er: bool = False

    def __post_init__(self):
        for name in ("categorical", "continuous", "effects"):
            value = getattr(self, name)
            if value is None:
                setattr(self, name, [])
            elif isinstance(value, str):
                setattr(self, name, [value])
            else:
                setattr(self, name, list(value))

    def scheme(self) -> CvScheme:
        return CvScheme.parse(self.cv, self.seed)

    def validate(self):
        """Raises ValueError for options that can never run."""
        if self.analysis not in ANALYSES:
            raise ValueError(f"Unknown analysis '{self.analysis}' (use {', '.join(ANALYSES)}).")
        if self.family is not None and self.family not in FAMILIES:
            raise ValueError(f"Unknown family '{self.family}' (use {' or '.join(FAMILIES)}).")
        if self.ncomp < 1:
            raise ValueError(f"ncomp must be positive, got {self.ncomp}.")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}.")
        if not 0.0 < self.shave_fraction < 1.0:
            raise ValueError(f"Shaving fraction must be in (0, 1), got {self.shave_fraction}.")
        if self.nlambda < 2:
            raise ValueError(f"nlambda must be at least 2, got {self.nlambda}.")
        self.scheme()


def load_config(path: str) -> RunConfig:
    """Loads a YAML or JSON run configuration."""
    if not os.path.exists(path):
        raise ValueError(f"Config file '{path}' does not exist.")

    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError(f"Config file '{path}' must hold a mapping.")

    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"Unknown config keys in '{path}': {unknown}.")
    return RunConfig(**data)


def save_config(config: RunConfig, path: str):
    """Saves as JSON for .json paths, YAML otherwise."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        if path.endswith(".json"):
            json.dump(asdict(config), f, indent=2)
            f.write("\n")
        else:
            yaml.dump(asdict(config), f, default_flow_style=False)


def apply_overrides(config: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
    """Command-line values win over the config file; None means 'not given'."""
    given = {k: v for k, v in overrides.items() if v is not None and not (isinstance(v, (list, tuple)) and not v)}
    return replace(config, **given)


def default_config_path() -> Optional[str]:
    """gem.yaml in the working directory, when present."""
    return CONFIG_FILE_NAME if os.path.exists(CONFIG_FILE_NAME) else None
