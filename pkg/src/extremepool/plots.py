"""Figure rendering for the CLI report paths.

Each function takes already-computed results and writes one PNG next to
the delimited output. Rendering is deterministic for fixed inputs and a
fixed matplotlib version.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import BandFractionStats, DdfTable, WindowedEstimates
from .synth import ConcatCurve

_DPI = 150


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_ddf(table: DdfTable, path: str | Path) -> Path:
    """Depth vs duration, one curve with CI band per return period."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for T in table.return_periods:
        durations = list(table.durations)
        levels = [table.estimates[(d, T)].level for d in durations]
        lo = [table.estimates[(d, T)].ci_low for d in durations]
        hi = [table.estimates[(d, T)].ci_high for d in durations]
        line, = ax.plot(durations, levels, marker="o", label=f"{T:g}-year")
        ax.fill_between(durations, lo, hi, alpha=0.25, color=line.get_color())
    ax.set_xlabel("duration (days)")
    ax.set_ylabel("depth (mm)")
    ax.set_title(f"DDF, {table.cell_or_region} ({table.mode})")
    ax.legend()
    return _finish(fig, path)


def plot_windowed(
    windowed: WindowedEstimates, T: float, label: str, path: str | Path
) -> Path:
    """Return level and CI band versus moving-window start year."""
    starts = [s for s, e in zip(windowed.window_starts, windowed.estimates) if e]
    ests = [e for e in windowed.estimates if e]
    fig, ax = plt.subplots(figsize=(6, 4))
    if ests:
        ax.plot(starts, [e.level for e in ests], color="tab:blue", label=f"RL{T:g}")
        ax.fill_between(
            starts,
            [e.ci_low for e in ests],
            [e.ci_high for e in ests],
            alpha=0.25,
            color="tab:blue",
        )
    ax.set_xlabel("window start year")
    ax.set_ylabel("return level (mm)")
    ax.set_title(f"{windowed.window_length_years}-year moving windows, {label}")
    ax.legend()
    return _finish(fig, path)


def plot_kde(grid: np.ndarray, density: np.ndarray, label: str, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(grid, density, color="tab:blue")
    ax.fill_between(grid, density, alpha=0.2, color="tab:blue")
    ax.set_xlabel(label)
    ax.set_ylabel("density")
    ax.set_title("kernel density estimate")
    return _finish(fig, path)


def plot_bands(stats: BandFractionStats, path: str | Path) -> Path:
    """Median convective fraction with IQR ribbon across latitude bands."""
    centers = [(b.band_low + b.band_high) / 2.0 for b in stats.bands]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(centers, [b.q50 for b in stats.bands], marker="o", color="tab:red", label="median")
    ax.fill_between(
        centers,
        [b.q25 for b in stats.bands],
        [b.q75 for b in stats.bands],
        alpha=0.3,
        color="tab:red",
        label="IQR",
    )
    ax.set_xlabel("latitude (deg)")
    ax.set_ylabel("convective fraction of extreme-day precipitation")
    ax.set_ylim(0, 1)
    ax.legend()
    return _finish(fig, path)


def plot_concat_curve(curve: ConcatCurve, path: str | Path) -> Path:
    """Mean CI width vs members concatenated, with the 1/sqrt(k) guide."""
    sizes = curve.subset_sizes
    means = [curve.mean_width(k) for k in sizes]
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in sizes:
        widths = curve.widths(k)
        ax.scatter([k] * widths.size, widths, s=8, alpha=0.35, color="tab:gray")
    ax.plot(sizes, means, marker="o", color="tab:blue", label="mean CI width")
    guide = [means[0] * np.sqrt(sizes[0] / k) for k in sizes]
    ax.plot(sizes, guide, linestyle="--", color="tab:orange", label=r"$k^{-1/2}$ scaling")
    ax.set_xlabel("members concatenated (k)")
    ax.set_ylabel("CI width (mm)")
    ax.legend()
    return _finish(fig, path)
