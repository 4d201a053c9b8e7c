import logging
import os
from pathlib import Path
from typing import Callable, Iterable, List, Optional, TypeVar

import pandas as pd
from joblib import Parallel, delayed
from rich.console import Console
from rich.logging import RichHandler

THREADS_ENV = "GEM_THREADS"
CSV_FLOAT_FORMAT = "%.12g"

T = TypeVar("T")
R = TypeVar("R")


def setup_logging(console: Console, verbose: bool = False):
    """Routes library log records through a rich handler on the given console."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False, show_time=False)],
        force=True,
    )


def n_jobs() -> int:
    """Worker count from GEM_THREADS (sequential when unset)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got '{raw}'.")
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got '{raw}'.")
    return value


def parallel_map(func: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Maps func over items; results keep input order whatever the schedule."""
    items = list(items)
    jobs = min(n_jobs(), max(len(items), 1))
    if jobs == 1:
        return [func(item) for item in items]
    return Parallel(n_jobs=jobs)(delayed(func)(item) for item in items)


def write_csv(frame: pd.DataFrame, path: Path, index: bool = False):
    """Writes a numeric table at 12 significant digits."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=index, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def write_lines(lines: Iterable[str], path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(f"{line}\n")


def safe_name(label: str, fallback: Optional[str] = None) -> str:
    """File-name friendly version of a term label (a:b -> a_x_b)."""
    name = label.replace(":", "_x_").replace("|", "_").replace(" ", "_")
    return name or (fallback or "term")
