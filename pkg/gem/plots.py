"""Deterministic SVG figures, each written next to a CSV of the plotted numbers."""

import logging
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from gem.utils import write_csv  # noqa: E402

log = logging.getLogger(__name__)

# 800 x 600 viewBox
FIGSIZE = (800 / 72, 600 / 72)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
HIGHLIGHT = "#d62728"
MUTED = "#9a9a9a"

matplotlib.rcParams.update(
    {
        "svg.hashsalt": "gem",
        "svg.fonttype": "none",
        "font.size": 11,
        "axes.grid": True,
        "grid.alpha": 0.3,
    }
)


def _save(fig, frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(frame, path.with_suffix(".csv"))
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    log.debug("Wrote %s", path)
    return path


def _finish(ax, title: str, xlabel: str, ylabel: str, legend: bool):
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if legend:
        ax.legend(loc="best", frameon=False)


def scatter(
    frame: pd.DataFrame,
    x: str,
    y: str,
    path: Path,
    title: str = "",
    group: Optional[str] = None,
    label: Optional[str] = None,
    highlight: Optional[str] = None,
    circles: Sequence[float] = (),
    segments: Optional[pd.DataFrame] = None,
) -> Path:
    """Scatter of two columns.

    ``group`` colours points by a categorical column, ``highlight`` marks the
    rows where a boolean column is true, ``circles`` draws origin-centred
    circles of the given radii and ``segments`` (label, x0, y0, x1, y1) adds
    labelled line segments, written to their own CSV twin.
    """
    fig, ax = plt.subplots(figsize=FIGSIZE)
    if group is not None:
        for i, (name, rows) in enumerate(frame.groupby(group, sort=True)):
            ax.scatter(rows[x], rows[y], s=28, color=PALETTE[i % len(PALETTE)], label=str(name))
    elif highlight is not None:
        mask = frame[highlight].astype(bool)
        ax.scatter(frame.loc[~mask, x], frame.loc[~mask, y], s=20, color=MUTED, label="other")
        ax.scatter(frame.loc[mask, x], frame.loc[mask, y], s=32, color=HIGHLIGHT, label=highlight)
    else:
        ax.scatter(frame[x], frame[y], s=24, color=PALETTE[0])

    if label is not None and (highlight is None or frame[highlight].any()):
        rows = frame[frame[highlight].astype(bool)] if highlight is not None else frame
        for _, row in rows.iterrows():
            ax.annotate(str(row[label]), (row[x], row[y]), fontsize=8, xytext=(3, 3), textcoords="offset points")

    for radius in circles:
        theta = np.linspace(0.0, 2.0 * np.pi, 361)
        ax.plot(radius * np.cos(theta), radius * np.sin(theta), color=MUTED, linewidth=0.8)
    if circles:
        ax.set_aspect("equal")

    if segments is not None:
        for i, row in enumerate(segments.itertuples(index=False)):
            ax.plot([row.x0, row.x1], [row.y0, row.y1], color=PALETTE[(i + 1) % len(PALETTE)], linewidth=2, label=str(row.label))
        write_csv(segments, Path(path).with_suffix(".segments.csv"))

    ax.axhline(0.0, color="black", linewidth=0.5)
    ax.axvline(0.0, color="black", linewidth=0.5)
    _finish(ax, title, x, y, legend=group is not None or highlight is not None or segments is not None)
    return _save(fig, frame, path)


def curve(
    frame: pd.DataFrame,
    x: str,
    ys: Sequence[str],
    path: Path,
    title: str = "",
    ylabel: str = "",
    error: Optional[str] = None,
    reference: Optional[str] = None,
    mark: Optional[str] = None,
    log_x: bool = False,
    legend: bool = True,
) -> Path:
    """Line plot of one or more columns against x.

    ``error`` adds error bars to the first series, ``reference`` draws the
    (constant) column as a dashed horizontal line, ``mark`` draws a vertical
    line at the rows where a boolean column is true.
    """
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for i, column in enumerate(ys):
        color = PALETTE[i % len(PALETTE)]
        if error is not None and i == 0:
            ax.errorbar(frame[x], frame[column], yerr=frame[error], color=color, marker="o", markersize=4, capsize=3, label=column)
        else:
            ax.plot(frame[x], frame[column], color=color, linewidth=1.2, label=column)
    if reference is not None:
        ax.axhline(float(frame[reference].iloc[0]), color="black", linestyle="--", linewidth=1, label=reference)
    if mark is not None:
        for value in frame.loc[frame[mark].astype(bool), x]:
            ax.axvline(float(value), color=MUTED, linestyle=":", linewidth=1.2)
    if log_x:
        ax.set_xscale("log")
    _finish(ax, title, x, ylabel, legend=legend)
    return _save(fig, frame, path)


def bars(frame: pd.DataFrame, x: str, y: str, path: Path, title: str = "", ylabel: str = "") -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.bar(frame[x].astype(str), frame[y], color=PALETTE[0])
    _finish(ax, title, x, ylabel or y, legend=False)
    return _save(fig, frame, path)
