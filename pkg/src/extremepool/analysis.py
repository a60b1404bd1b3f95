"""Assessment layer: DDF tables, moving-window return levels, regional
aggregation with goodness-of-fit gating, hypothesis tests, temperature
scaling diagnostics, convective-fraction band statistics and kernel
density estimates.

All quantiles here (medians, IQRs, band bounds) use linear interpolation
between order statistics (type 7), matching the bias-correction module.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import EstimationError, InputError
from .gev import GevFit, KsResult, ReturnLevelEstimate, fit_gev_mle, return_level
from .maxima import (
    BlockMaximaSeries,
    DailySeries,
    annual_max_days,
    annual_maxima,
    concatenate_maxima,
    fit_concatenated,
)

DDF_MODES = ("concatenated", "per_member_average")


@dataclass(frozen=True, eq=False)
class DdfTable:
    """Depth-duration-frequency estimates for one cell or region.

    ``estimates`` maps (duration_days, return_period) to an estimate;
    durations whose fit failed are listed in ``skipped`` with a reason and
    do not appear in ``durations``.
    """

    cell_or_region: str
    durations: tuple[int, ...]
    return_periods: tuple[float, ...]
    estimates: dict[tuple[int, float], ReturnLevelEstimate]
    mode: str
    skipped: tuple[tuple[int, str], ...] = ()

    def __post_init__(self) -> None:
        for d in self.durations:
            for T in self.return_periods:
                if (d, T) not in self.estimates:
                    raise InputError(f"DDF table hole at duration {d}, T {T}")


def ddf(
    maxima_by_duration: Mapping[int, Sequence[BlockMaximaSeries]],
    T_list: Iterable[float] = (30.0, 100.0),
    mode: str = "concatenated",
    confidence: float = 0.95,
) -> DdfTable:
    """Build a DDF table from per-duration maxima series.

    ``concatenated`` pools members before fitting; ``per_member_average``
    fits each member separately and averages levels and interval bounds
    across members. A duration whose fit does not converge is dropped from
    the table with the reason recorded.
    """
    if mode not in DDF_MODES:
        raise InputError(f"mode must be one of {DDF_MODES}, got {mode!r}")
    if not maxima_by_duration:
        raise InputError("no durations supplied")
    T_list = tuple(float(t) for t in T_list)
    cells = {s.cell_id for group in maxima_by_duration.values() for s in group}
    if len(cells) != 1:
        raise InputError(f"DDF input mixes cells: {sorted(cells)}")
    estimates: dict[tuple[int, float], ReturnLevelEstimate] = {}
    kept: list[int] = []
    skipped: list[tuple[int, str]] = []
    for d in sorted(maxima_by_duration):
        group = list(maxima_by_duration[d])
        try:
            if mode == "concatenated":
                _, levels = fit_concatenated(group, T_list, confidence)
                for rl in levels:
                    estimates[(d, rl.return_period)] = rl
            else:
                per_member = [
                    m for s in group for m in s.split_members()
                ]
                member_levels: dict[float, list[ReturnLevelEstimate]] = {T: [] for T in T_list}
                for series in per_member:
                    fit = fit_gev_mle(series.maxima)
                    if not fit.converged:
                        raise EstimationError(
                            f"member {series.member_ids[0]!r} fit did not converge"
                        )
                    for T in T_list:
                        member_levels[T].append(return_level(fit, T, confidence))
                for T in T_list:
                    group_levels = member_levels[T]
                    estimates[(d, T)] = ReturnLevelEstimate(
                        return_period=T,
                        level=float(np.mean([r.level for r in group_levels])),
                        ci_low=float(np.mean([r.ci_low for r in group_levels])),
                        ci_high=float(np.mean([r.ci_high for r in group_levels])),
                        confidence=confidence,
                        method="delta",
                    )
            kept.append(d)
        except EstimationError as exc:
            skipped.append((d, str(exc)))
    if not kept:
        raise EstimationError("every duration failed to fit")
    return DdfTable(
        cell_or_region=next(iter(cells)),
        durations=tuple(kept),
        return_periods=T_list,
        estimates=estimates,
        mode=mode,
        skipped=tuple(skipped),
    )


@dataclass(frozen=True, eq=False)
class WindowedEstimates:
    """Return levels fitted on moving windows of exactly window_length_years."""

    window_length_years: int
    window_starts: tuple[int, ...]
    estimates: tuple[ReturnLevelEstimate | None, ...]
    failures: tuple[tuple[int, str], ...] = ()


def moving_window_rl(
    series: BlockMaximaSeries,
    window: int = 30,
    stride: int = 1,
    T: float = 100.0,
    confidence: float = 0.95,
) -> WindowedEstimates:
    """Fit a GEV per moving window of years and return RL_T per window.

    Entries are pooled across whatever members the series carries. A
    window whose fit fails yields None in ``estimates`` plus a reason in
    ``failures``; the sequence continues.
    """
    if window < 1 or stride < 1:
        raise InputError("window and stride must be positive")
    years = series.years
    y_min, y_max = int(years.min()), int(years.max())
    if y_max - y_min + 1 < window:
        raise InputError(
            f"series spans {y_max - y_min + 1} years, fewer than the {window}-year window"
        )
    present = set(int(y) for y in years)
    starts: list[int] = []
    estimates: list[ReturnLevelEstimate | None] = []
    failures: list[tuple[int, str]] = []
    for start in range(y_min, y_max - window + 2, stride):
        window_years = set(range(start, start + window))
        if not window_years <= present:
            continue
        starts.append(start)
        mask = (years >= start) & (years < start + window)
        try:
            fit = fit_gev_mle(series.maxima[mask])
            if not fit.converged:
                raise EstimationError("window fit did not converge")
            estimates.append(return_level(fit, T, confidence))
        except EstimationError as exc:
            estimates.append(None)
            failures.append((start, str(exc)))
    return WindowedEstimates(
        window_length_years=int(window),
        window_starts=tuple(starts),
        estimates=tuple(estimates),
        failures=tuple(failures),
    )


@dataclass(frozen=True, eq=False)
class RegionMask:
    """cell_id -> region label; "CONUS" addresses the union of all cells."""

    regions: dict[str, str]

    def cells_in(self, region: str) -> list[str]:
        if region == "CONUS":
            return sorted(self.regions)
        return sorted(c for c, r in self.regions.items() if r == region)

    @property
    def labels(self) -> list[str]:
        return sorted(set(self.regions.values()))


def regional_aggregate(
    per_cell: Mapping[str, tuple[GevFit, ReturnLevelEstimate, KsResult]],
    mask: RegionMask,
    region: str,
) -> dict[str, float]:
    """Summarize return levels over a region's cells that pass the KS gate.

    Cells failing the goodness-of-fit test are excluded from the statistics
    but counted in ``n_excluded``.
    """
    missing = sorted(set(per_cell) - set(mask.regions))
    if missing:
        raise InputError(f"cells missing from the region mask: {missing[:5]}")
    cells = [c for c in mask.cells_in(region) if c in per_cell]
    if not cells:
        raise InputError(f"region {region!r} has no cells with estimates")
    passing = [per_cell[c][1].level for c in cells if per_cell[c][2].passed]
    n_excluded = len(cells) - len(passing)
    if not passing:
        raise EstimationError(f"region {region!r}: every cell failed the KS gate")
    levels = np.asarray(passing)
    q25, q50, q75 = np.quantile(levels, [0.25, 0.50, 0.75], method="linear")
    return {
        "mean": float(np.mean(levels)),
        "median": float(q50),
        "q25": float(q25),
        "q75": float(q75),
        "iqr": float(q75 - q25),
        "n_used": int(len(passing)),
        "n_excluded": int(n_excluded),
    }


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> TestResult:
    """Kruskal-Wallis H with tie correction, p from chi-square (k-1 dof)."""
    if len(groups) < 2:
        raise InputError("need at least two groups")
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if any(a.size == 0 for a in arrays):
        raise InputError("groups must be nonempty")
    pooled = np.concatenate(arrays)
    if np.all(pooled == pooled[0]):
        raise InputError("all values identical; H is undefined")
    h, p = stats.kruskal(*arrays)
    return TestResult(statistic=float(h), p_value=float(p))


def t_test_independent(a, b, pooled_variance: bool = False) -> TestResult:
    """Two-sided independent-samples t test (Welch by default)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise InputError("each sample needs at least 2 values")
    if np.var(a) == 0.0 and np.var(b) == 0.0:
        raise InputError("both samples have zero variance; t is undefined")
    t, p = stats.ttest_ind(a, b, equal_var=pooled_variance)
    return TestResult(statistic=float(t), p_value=float(p))


@dataclass(frozen=True)
class ScalingResult:
    """Percent change per Kelvin of RL_T and P99.9 between two periods."""

    delta_rl_per_K: float
    delta_p999_per_K: float
    ref_period: tuple[int, int]
    future_period: tuple[int, int]
    delta_T: float
    return_period: float = 100.0


def _period_values(series: DailySeries, period: tuple[int, int]) -> np.ndarray:
    years = series.dates.astype("datetime64[Y]").astype(int) + 1970
    vals = series.values[(years >= period[0]) & (years <= period[1])]
    if vals.size == 0:
        raise InputError(f"no daily data inside {period}")
    return vals


def _period_series(series: DailySeries, period: tuple[int, int]) -> DailySeries:
    years = series.dates.astype("datetime64[Y]").astype(int) + 1970
    mask = (years >= period[0]) & (years <= period[1])
    return DailySeries(
        cell_id=series.cell_id,
        member_id=series.member_id,
        dates=series.dates[mask],
        values=series.values[mask],
    )


def percentile_scaling(
    daily: DailySeries,
    annual_temps: Mapping[int, float],
    ref: tuple[int, int],
    fut: tuple[int, int],
    T_rl: float = 100.0,
) -> ScalingResult:
    """Temperature scaling of heavy (P99.9) and extreme (RL_T) precipitation.

    Each scaling is 100*(X_fut - X_ref) / (X_ref * (Tbar_fut - Tbar_ref))
    in percent per Kelvin, with P99.9 over all daily values of the period
    and RL_T from a GEV fit on the period's annual maxima.
    """
    temps_ref = [annual_temps[y] for y in range(ref[0], ref[1] + 1) if y in annual_temps]
    temps_fut = [annual_temps[y] for y in range(fut[0], fut[1] + 1) if y in annual_temps]
    if len(temps_ref) < ref[1] - ref[0] + 1 or len(temps_fut) < fut[1] - fut[0] + 1:
        raise InputError("annual temperatures do not cover both periods")
    delta_T = float(np.mean(temps_fut) - np.mean(temps_ref))
    if delta_T == 0.0:
        raise EstimationError("periods have identical mean temperature")

    p999 = []
    rl = []
    for period in (ref, fut):
        vals = _period_values(daily, period)
        p999.append(float(np.quantile(vals, 0.999, method="linear")))
        fit = fit_gev_mle(annual_maxima(_period_series(daily, period)).maxima)
        if not fit.converged:
            raise EstimationError(f"GEV fit failed for period {period}")
        rl.append(return_level(fit, T_rl).level)
    if p999[0] == 0.0 or rl[0] == 0.0:
        raise EstimationError("reference-period statistic is zero; scaling undefined")
    return ScalingResult(
        delta_rl_per_K=100.0 * (rl[1] - rl[0]) / (rl[0] * delta_T),
        delta_p999_per_K=100.0 * (p999[1] - p999[0]) / (p999[0] * delta_T),
        ref_period=(int(ref[0]), int(ref[1])),
        future_period=(int(fut[0]), int(fut[1])),
        delta_T=delta_T,
        return_period=float(T_rl),
    )


@dataclass(frozen=True, eq=False)
class BandStats:
    """Cross-member convective-fraction statistics for one latitude band."""

    band_low: float
    band_high: float
    n_cells: int
    fractions: np.ndarray
    q25: float
    q50: float
    q75: float
    iqr: float
    p_value: float


@dataclass(frozen=True, eq=False)
class BandFractionStats:
    bands: tuple[BandStats, ...]
    member_ids: tuple[str, ...]
    n_violations: int


def convective_fraction_bands(
    totals: Sequence[DailySeries],
    convectives: Sequence[DailySeries],
    bands: Sequence[tuple[float, float]],
    cell_lats: Mapping[str, float],
    n_bootstrap: int = 1000,
    seed: int = 0,
) -> BandFractionStats:
    """Member-wise convective fraction of extreme-day precipitation per band.

    Extreme days are each cell's annual-maximum days (one per covered
    cell-year). Per band the member fractions are summarized by type-7
    quartiles, and the 25th vs 75th percentile bounds are compared by a
    Welch t test between their bootstrap (member-resampling) sampling
    distributions. Identical member fractions make the bounds
    indistinguishable by construction and report p = 1.
    """
    paired = {(s.cell_id, s.member_id): s for s in convectives}
    if len(paired) != len(convectives):
        raise InputError("duplicate (cell, member) convective series")
    n_violations = 0
    cell_ids = set()
    members = sorted({s.member_id for s in totals})
    # numerator/denominator sums per (member, cell) over that cell's extreme days
    sums: dict[tuple[str, str], tuple[float, float]] = {}
    for total in totals:
        key = (total.cell_id, total.member_id)
        conv = paired.get(key)
        if conv is None:
            raise InputError(f"missing convective series for {key}")
        if not np.array_equal(total.dates, conv.dates):
            raise InputError(f"convective/total dates differ for {key}")
        n_violations += int(np.sum(conv.values > total.values))
        if total.cell_id not in cell_lats:
            raise InputError(f"cell {total.cell_id!r} has no latitude")
        cell_ids.add(total.cell_id)
        days = annual_max_days(total)
        idx = np.searchsorted(total.dates, days)
        sums[(total.member_id, total.cell_id)] = (
            float(np.sum(conv.values[idx])),
            float(np.sum(total.values[idx])),
        )
    if n_violations:
        warnings.warn(
            f"{n_violations} days with convective > total precipitation",
            UserWarning,
            stacklevel=2,
        )
    uncovered = {
        c for c in cell_ids if not any(lo <= cell_lats[c] < hi for lo, hi in bands)
    }
    if uncovered:
        raise InputError(f"cells outside every band: {sorted(uncovered)[:5]}")

    rng = np.random.default_rng(seed)
    out: list[BandStats] = []
    for lo, hi in bands:
        band_cells = sorted(c for c in cell_ids if lo <= cell_lats[c] < hi)
        if not band_cells:
            warnings.warn(f"band [{lo}, {hi}) has no cells; skipped", UserWarning, stacklevel=2)
            continue
        fractions = np.array(
            [
                sum(sums[(m, c)][0] for c in band_cells)
                / sum(sums[(m, c)][1] for c in band_cells)
                for m in members
            ]
        )
        q25, q50, q75 = np.quantile(fractions, [0.25, 0.5, 0.75], method="linear")
        out.append(
            BandStats(
                band_low=float(lo),
                band_high=float(hi),
                n_cells=len(band_cells),
                fractions=fractions,
                q25=float(q25),
                q50=float(q50),
                q75=float(q75),
                iqr=float(q75 - q25),
                p_value=_bound_comparison_p(fractions, rng, n_bootstrap),
            )
        )
    return BandFractionStats(
        bands=tuple(out), member_ids=tuple(members), n_violations=n_violations
    )


def _bound_comparison_p(fractions: np.ndarray, rng, n_bootstrap: int) -> float:
    """p-value for q25-vs-q75 bound separation via member bootstrap.

    A member spread at numerical-noise level is no evidence that the
    bounds differ, so it short-circuits to p = 1.
    """
    spread = float(fractions.max() - fractions.min())
    if spread <= 1e-9 * max(float(np.abs(fractions).max()), 1e-30):
        return 1.0
    idx = rng.integers(0, fractions.size, size=(n_bootstrap, fractions.size))
    resampled = fractions[idx]
    b25 = np.quantile(resampled, 0.25, axis=1, method="linear")
    b75 = np.quantile(resampled, 0.75, axis=1, method="linear")
    if np.std(b25) == 0.0 and np.std(b75) == 0.0:
        return 1.0 if b25[0] == b75[0] else 0.0
    return float(stats.ttest_ind(b25, b75, equal_var=False).pvalue)


def kde(values, grid_points: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian kernel density estimate on a uniform grid.

    Bandwidth is Silverman's 0.9*min(sd, IQR/1.34)*n^(-1/5) (sd alone when
    the IQR degenerates to zero); the grid spans [min-3h, max+3h].
    Returns (grid, density).
    """
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 1 or vals.size < 2:
        raise InputError("need at least two values")
    if np.unique(vals).size < 2:
        raise InputError("all values identical; density is degenerate")
    sd = float(np.std(vals, ddof=1))
    q25, q75 = np.quantile(vals, [0.25, 0.75], method="linear")
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    h = 0.9 * spread * vals.size ** (-0.2)
    grid = np.linspace(vals.min() - 3 * h, vals.max() + 3 * h, int(grid_points))
    z = (grid[:, None] - vals[None, :]) / h
    density = np.exp(-0.5 * z**2).sum(axis=1) / (vals.size * h * np.sqrt(2 * np.pi))
    return grid, density
