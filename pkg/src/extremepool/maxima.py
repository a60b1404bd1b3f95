"""Duration accumulation, annual-maximum extraction and ensemble pooling.

Pooling ("concatenation") merges the annual-maxima samples of several
initial-condition members into one sample before fitting, which is
legitimate when the members share a single generating process and buys a
much larger sample per estimate.
"""

from __future__ import annotations

import datetime
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CoverageWarning, EstimationError, HeterogeneityWarning, InputError
from .gev import GevFit, ReturnLevelEstimate, fit_gev_mle, ks_test, return_level

ONE_DAY = np.timedelta64(1, "D")

DEFAULT_COVERAGE = 0.90
DEFAULT_YEAR_START = "01-01"


def _as_dates(dates) -> np.ndarray:
    try:
        arr = np.asarray(dates, dtype="datetime64[D]")
    except (ValueError, TypeError) as exc:
        raise InputError(f"unparseable dates: {exc}") from exc
    return arr


@dataclass(frozen=True, eq=False)
class DailySeries:
    """Dated nonnegative daily depths (mm/day) for one cell and one member."""

    cell_id: str
    member_id: str
    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        dates = _as_dates(self.dates)
        values = np.asarray(self.values, dtype=float)
        if dates.shape != values.shape or dates.ndim != 1:
            raise InputError("dates and values must be 1-d and equal length")
        if dates.size > 1 and not np.all(np.diff(dates) > np.timedelta64(0, "D")):
            raise InputError("dates must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise InputError("values must be finite")
        if np.any(values < 0):
            raise InputError("daily depths must be nonnegative")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.dates.size)

    @property
    def n_gap_days(self) -> int:
        """Calendar days missing between the first and last date."""
        if len(self) < 2:
            return 0
        span = int((self.dates[-1] - self.dates[0]) / ONE_DAY) + 1
        return span - len(self)


@dataclass(frozen=True, eq=False)
class BlockMaximaSeries:
    """Per-year d-day annual maxima with member provenance."""

    cell_id: str
    duration_days: int
    member_ids: np.ndarray
    years: np.ndarray
    maxima: np.ndarray

    def __post_init__(self) -> None:
        if self.duration_days < 1:
            raise InputError("duration must be at least 1 day")
        members = np.asarray(self.member_ids, dtype=object)
        years = np.asarray(self.years, dtype=np.int64)
        maxima = np.asarray(self.maxima, dtype=float)
        if not (members.shape == years.shape == maxima.shape) or members.ndim != 1:
            raise InputError("member_ids, years and maxima must be 1-d, equal length")
        if np.any(~np.isfinite(maxima)) or np.any(maxima < 0):
            raise InputError("maxima must be finite and nonnegative")
        keys = {(m, int(y)) for m, y in zip(members, years)}
        if len(keys) != members.size:
            raise InputError("duplicate (member_id, year) entry")
        object.__setattr__(self, "member_ids", members)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "maxima", maxima)

    def __len__(self) -> int:
        return int(self.maxima.size)

    @property
    def entries(self) -> list[tuple[str, int, float]]:
        return [
            (str(m), int(y), float(v))
            for m, y, v in zip(self.member_ids, self.years, self.maxima)
        ]

    def canonical(self) -> "BlockMaximaSeries":
        """Copy sorted by (member_id, year)."""
        order = np.lexsort((self.years, self.member_ids))
        return BlockMaximaSeries(
            cell_id=self.cell_id,
            duration_days=self.duration_days,
            member_ids=self.member_ids[order],
            years=self.years[order],
            maxima=self.maxima[order],
        )

    def split_members(self) -> list["BlockMaximaSeries"]:
        """One single-member series per member, members sorted by id."""
        out = []
        for member in sorted(set(self.member_ids)):
            mask = self.member_ids == member
            out.append(
                BlockMaximaSeries(
                    cell_id=self.cell_id,
                    duration_days=self.duration_days,
                    member_ids=self.member_ids[mask],
                    years=self.years[mask],
                    maxima=self.maxima[mask],
                )
            )
        return out


def block_years(dates: np.ndarray, year_start: str = DEFAULT_YEAR_START) -> np.ndarray:
    """Block-year label of each date.

    A block year labeled y runs from y-<year_start> (inclusive) to the same
    boundary one year later (exclusive); the default 01-01 start makes the
    label the calendar year.
    """
    dates = _as_dates(dates)
    cal_years = dates.astype("datetime64[Y]").astype(int) + 1970
    if year_start == "01-01":
        return cal_years
    month, day = _parse_year_start(year_start)
    boundary = (
        dates.astype("datetime64[Y]").astype("datetime64[M]")
        + np.timedelta64(month - 1, "M")
    ).astype("datetime64[D]") + np.timedelta64(day - 1, "D")
    return cal_years - (dates < boundary).astype(int)


def _parse_year_start(year_start: str) -> tuple[int, int]:
    try:
        month_s, day_s = year_start.split("-")
        # 2001 is not a leap year, so 02-29 (an ambiguous boundary) is rejected
        parsed = datetime.date(2001, int(month_s), int(day_s))
    except ValueError as exc:
        raise InputError(f"year start must be a valid MM-DD, got {year_start!r}") from exc
    return parsed.month, parsed.day


def _days_in_block_year(year: int, year_start: str) -> int:
    month, day = _parse_year_start(year_start)
    start = np.datetime64(f"{year:04d}-{month:02d}-{day:02d}", "D")
    end = np.datetime64(f"{year + 1:04d}-{month:02d}-{day:02d}", "D")
    return int((end - start) / ONE_DAY)


def accumulate_duration(series: DailySeries, d: int) -> DailySeries:
    """Rolling d-day sums over calendar-contiguous runs.

    The output value at a date is the sum of the d consecutive daily values
    ending there; gaps break windows rather than bridging them. d=1 returns
    the series unchanged.
    """
    if d < 1:
        raise ValueError("duration must be at least 1 day")
    if d == 1:
        return series
    n = len(series)
    out_dates: list[np.ndarray] = []
    out_values: list[np.ndarray] = []
    if n:
        breaks = np.flatnonzero(np.diff(series.dates) != ONE_DAY)
        starts = np.concatenate(([0], breaks + 1))
        ends = np.concatenate((breaks + 1, [n]))
        for lo, hi in zip(starts, ends):
            if hi - lo < d:
                continue
            vals = series.values[lo:hi]
            sums = np.lib.stride_tricks.sliding_window_view(vals, d).sum(axis=1)
            out_dates.append(series.dates[lo + d - 1 : hi])
            out_values.append(sums)
    return DailySeries(
        cell_id=series.cell_id,
        member_id=series.member_id,
        dates=np.concatenate(out_dates) if out_dates else np.empty(0, "datetime64[D]"),
        values=np.concatenate(out_values) if out_values else np.empty(0, float),
    )


def annual_maxima(
    series: DailySeries,
    d: int = 1,
    coverage_threshold: float = DEFAULT_COVERAGE,
    year_start: str = DEFAULT_YEAR_START,
) -> BlockMaximaSeries:
    """Per-year maxima of the d-day accumulated series.

    A year contributes only when the underlying daily series covers at
    least ``coverage_threshold`` of its days. A window is assigned to the
    block year of its END date, so late-December windows can count toward
    the following year.
    """
    years = block_years(series.dates, year_start)
    uniq, counts = np.unique(years, return_counts=True)
    eligible = {
        int(y)
        for y, c in zip(uniq, counts)
        if c >= coverage_threshold * _days_in_block_year(int(y), year_start)
    }
    dropped = [int(y) for y in uniq if int(y) not in eligible]
    if dropped:
        warnings.warn(
            f"{series.cell_id}/{series.member_id}: years {dropped} dropped "
            f"(daily coverage below {coverage_threshold:.0%})",
            CoverageWarning,
            stacklevel=2,
        )
    acc = accumulate_duration(series, d)
    acc_years = block_years(acc.dates, year_start)
    out_years = []
    out_maxima = []
    for y in sorted(eligible):
        mask = acc_years == y
        if np.any(mask):
            out_years.append(y)
            out_maxima.append(float(np.max(acc.values[mask])))
    if not out_years:
        raise InputError(
            f"{series.cell_id}/{series.member_id}: no year meets the "
            f"{coverage_threshold:.0%} coverage rule"
        )
    k = len(out_years)
    return BlockMaximaSeries(
        cell_id=series.cell_id,
        duration_days=int(d),
        member_ids=np.array([series.member_id] * k, dtype=object),
        years=np.array(out_years, dtype=np.int64),
        maxima=np.array(out_maxima, dtype=float),
    )


def annual_max_days(
    series: DailySeries,
    coverage_threshold: float = DEFAULT_COVERAGE,
    year_start: str = DEFAULT_YEAR_START,
) -> np.ndarray:
    """Dates of each covered year's daily maximum (first occurrence on ties)."""
    years = block_years(series.dates, year_start)
    uniq, counts = np.unique(years, return_counts=True)
    out = []
    for y, c in zip(uniq, counts):
        if c < coverage_threshold * _days_in_block_year(int(y), year_start):
            continue
        mask = years == y
        idx = np.flatnonzero(mask)[np.argmax(series.values[mask])]
        out.append(series.dates[idx])
    if not out:
        raise InputError(
            f"{series.cell_id}/{series.member_id}: no year meets the "
            f"{coverage_threshold:.0%} coverage rule"
        )
    return np.array(out, dtype="datetime64[D]")


def concatenate_maxima(series_list: Sequence[BlockMaximaSeries]) -> BlockMaximaSeries:
    """Pool maxima samples across members into one canonical series.

    All inputs must share cell and duration; the output is the union of the
    entries sorted by (member_id, year), so input order never matters.
    """
    if not series_list:
        raise InputError("nothing to concatenate")
    cell_ids = {s.cell_id for s in series_list}
    durations = {s.duration_days for s in series_list}
    if len(cell_ids) != 1:
        raise InputError(f"cell_id mismatch in concatenation: {sorted(cell_ids)}")
    if len(durations) != 1:
        raise InputError(f"duration mismatch in concatenation: {sorted(durations)}")
    merged = BlockMaximaSeries(
        cell_id=series_list[0].cell_id,
        duration_days=series_list[0].duration_days,
        member_ids=np.concatenate([s.member_ids for s in series_list]),
        years=np.concatenate([s.years for s in series_list]),
        maxima=np.concatenate([s.maxima for s in series_list]),
    )
    return merged.canonical()


@dataclass(frozen=True, eq=False)
class EnsembleCollection:
    """Daily series of all members of one cell's ensemble."""

    members: tuple[DailySeries, ...]
    n_members: int = field(init=False)
    years_per_member: int = field(init=False)

    def __post_init__(self) -> None:
        members = tuple(self.members)
        if not members:
            raise InputError("ensemble needs at least one member")
        if len({m.cell_id for m in members}) != 1:
            raise InputError("ensemble members must share one cell_id")
        ids = [m.member_id for m in members]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate member_id in ensemble")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "n_members", len(members))
        object.__setattr__(self, "years_per_member", self._covered_years(members))

    @staticmethod
    def _covered_years(members: tuple[DailySeries, ...]) -> int:
        counts = []
        for m in members:
            years = block_years(m.dates)
            uniq, c = np.unique(years, return_counts=True)
            counts.append(
                sum(
                    1
                    for y, k in zip(uniq, c)
                    if k >= DEFAULT_COVERAGE * _days_in_block_year(int(y), DEFAULT_YEAR_START)
                )
            )
        return min(counts)


@dataclass(frozen=True)
class PooledMoments:
    """Moments estimated from all members' points at once.

    ``lag1_autocorr`` is None when undefined (zero pooled variance). Lag
    pairs never straddle member boundaries, so with N equal members of
    length M there are N*(M-1) of them.
    """

    mean: float
    std_dev: float
    lag1_autocorr: float | None
    n_points: int
    n_lag_pairs: int


def pooled_moments(collection: EnsembleCollection) -> PooledMoments:
    """Pooled mean/std over all N*M points plus within-member lag-1 autocorrelation."""
    if all(len(m) < 2 for m in collection.members):
        raise InputError("every member has fewer than 2 points")
    values = np.concatenate([m.values for m in collection.members])
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1))
    n_pairs = sum(max(len(m) - 1, 0) for m in collection.members)
    if std == 0.0:
        return PooledMoments(mean, 0.0, None, int(values.size), int(n_pairs))
    centered_sq = float(np.sum((values - mean) ** 2))
    cross = 0.0
    for m in collection.members:
        if len(m) < 2:
            continue
        v = m.values - mean
        cross += float(np.sum(v[:-1] * v[1:]))
    return PooledMoments(
        mean=mean,
        std_dev=std,
        lag1_autocorr=float(cross / centered_sq),
        n_points=int(values.size),
        n_lag_pairs=int(n_pairs),
    )


def fit_concatenated(
    series_list: Sequence[BlockMaximaSeries],
    T_list: Iterable[float],
    confidence: float = 0.95,
) -> tuple[GevFit, list[ReturnLevelEstimate]]:
    """Pool the inputs, fit once, and evaluate the requested return levels.

    Warns with HeterogeneityWarning when more than half of the members
    individually fail a KS test against the pooled fit, which is the
    signature of pooling across different generating processes.
    """
    pooled = concatenate_maxima(series_list)
    fit = fit_gev_mle(pooled.maxima)
    if not fit.converged:
        raise EstimationError("pooled fit did not converge")
    members = sorted(set(pooled.member_ids))
    if len(members) > 1:
        rejected = 0
        for member in members:
            res = ks_test(pooled.maxima[pooled.member_ids == member], fit.params)
            rejected += not res.passed
        if rejected > 0.5 * len(members):
            warnings.warn(
                f"{rejected}/{len(members)} members reject the pooled fit; "
                "the ensemble may mix generating processes",
                HeterogeneityWarning,
                stacklevel=2,
            )
    levels = [return_level(fit, T, confidence) for T in T_list]
    return fit, levels
