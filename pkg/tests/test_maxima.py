"""Duration accumulation, annual maxima, pooling and pooled moments."""

import numpy as np
import pytest

from extremepool import (
    BlockMaximaSeries,
    CoverageWarning,
    DailySeries,
    EnsembleCollection,
    GevParams,
    HeterogeneityWarning,
    InputError,
    accumulate_duration,
    annual_max_days,
    annual_maxima,
    block_years,
    concatenate_maxima,
    fit_concatenated,
    fit_gev_mle,
    gev_sample,
    pooled_moments,
)


def days(start: str, n: int) -> np.ndarray:
    d0 = np.datetime64(start, "D")
    return np.arange(d0, d0 + np.timedelta64(n, "D"))


def daily(values, start="2001-01-01", cell="C1", member="IC01", dates=None):
    values = np.asarray(values, dtype=float)
    if dates is None:
        dates = days(start, values.size)
    return DailySeries(cell_id=cell, member_id=member, dates=dates, values=values)


def maxima_series(member, years, values, cell="C1", d=1):
    years = np.asarray(years, dtype=np.int64)
    return BlockMaximaSeries(
        cell_id=cell,
        duration_days=d,
        member_ids=np.array([member] * years.size, dtype=object),
        years=years,
        maxima=np.asarray(values, dtype=float),
    )


class TestAccumulate:
    def test_rolling_sums_by_hand(self):
        acc = accumulate_duration(daily([1, 2, 3, 4]), 3)
        np.testing.assert_array_equal(acc.values, [6, 9])
        np.testing.assert_array_equal(acc.dates, days("2001-01-03", 2))

    def test_d1_identity(self):
        s = daily([1, 2, 3])
        assert accumulate_duration(s, 1) is s

    def test_sparse_window(self):
        acc = accumulate_duration(daily([5, 0, 0, 0, 0, 7]), 5)
        np.testing.assert_array_equal(acc.values, [5.0, 7.0])

    def test_gaps_break_windows(self):
        dates = np.concatenate([days("2001-01-01", 4), days("2001-01-10", 4)])
        s = daily(np.ones(8), dates=dates)
        acc = accumulate_duration(s, 3)
        # two runs of 4 days, each yielding 2 windows; none bridge the gap
        assert len(acc) == 4
        np.testing.assert_array_equal(acc.values, [3, 3, 3, 3])

    def test_run_shorter_than_window_dropped(self):
        dates = np.concatenate([days("2001-01-01", 2), days("2001-01-10", 5)])
        acc = accumulate_duration(daily([9, 9, 1, 1, 1, 1, 1], dates=dates), 3)
        assert len(acc) == 3
        np.testing.assert_array_equal(acc.values, [3, 3, 3])

    def test_bad_duration(self):
        with pytest.raises(ValueError):
            accumulate_duration(daily([1, 2]), 0)

    @pytest.mark.parametrize("d", [2, 3, 5, 10])
    def test_dominates_daily_maxima(self, d):
        rng = np.random.default_rng(5)
        s = daily(rng.gamma(0.6, 8.0, 365 * 3))
        base = annual_maxima(s, 1)
        acc = annual_maxima(s, d)
        assert np.array_equal(base.years, acc.years)
        assert np.all(acc.maxima >= base.maxima)


class TestAnnualMaxima:
    def test_direct_max_per_year(self):
        # two short "years"; coverage rule relaxed to let them count
        dates = np.concatenate([days("2001-12-29", 3), days("2002-12-29", 3)])
        s = daily([1, 5, 3, 2, 2, 9], dates=dates)
        bm = annual_maxima(s, 1, coverage_threshold=0.005)
        np.testing.assert_array_equal(bm.years, [2001, 2002])
        np.testing.assert_array_equal(bm.maxima, [5, 9])

    def test_half_covered_year_excluded(self):
        dates = np.concatenate([days("2001-01-01", 365), days("2002-01-01", 180)])
        s = daily(np.ones(545), dates=dates)
        with pytest.warns(CoverageWarning):
            bm = annual_maxima(s, 1)
        np.testing.assert_array_equal(bm.years, [2001])

    def test_no_covered_year_errors(self):
        s = daily(np.ones(30))
        with pytest.warns(CoverageWarning):
            with pytest.raises(InputError, match="coverage"):
                annual_maxima(s, 1)

    def test_window_straddling_new_year(self):
        # biggest 3-day total ends Jan 1 2002 and must land in 2002
        values = np.zeros(730)
        values[363] = 10.0  # 2001-12-30
        values[364] = 10.0  # 2001-12-31
        values[365] = 10.0  # 2002-01-01
        values[100] = 4.0  # keeps 2001 from being all-zero
        bm = annual_maxima(daily(values), 3)
        np.testing.assert_array_equal(bm.years, [2001, 2002])
        assert bm.maxima[0] == 20.0  # windows ending Dec 30/31
        assert bm.maxima[1] == 30.0  # window ending Jan 1

    def test_water_year_start(self):
        dates = days("2000-10-01", 365)
        s = daily(np.ones(365), dates=dates)
        bm = annual_maxima(s, 1, year_start="10-01")
        np.testing.assert_array_equal(bm.years, [2000])

    def test_annual_max_days_first_tie(self):
        values = np.zeros(365)
        values[40] = 7.0
        values[200] = 7.0
        (day,) = annual_max_days(daily(values))
        assert day == np.datetime64("2001-02-10")

    def test_leap_day_counts(self):
        # 2004 is a leap year: 366 days present means full coverage
        s = daily(np.ones(366), start="2004-01-01")
        bm = annual_maxima(s, 1)
        np.testing.assert_array_equal(bm.years, [2004])


class TestBlockYears:
    def test_calendar_default(self):
        d = np.array(["2001-01-01", "2001-12-31", "2002-01-01"], dtype="datetime64[D]")
        np.testing.assert_array_equal(block_years(d), [2001, 2001, 2002])

    def test_custom_start(self):
        d = np.array(["2001-09-30", "2001-10-01", "2002-09-30"], dtype="datetime64[D]")
        np.testing.assert_array_equal(block_years(d, "10-01"), [2000, 2001, 2001])

    def test_bad_year_start(self):
        with pytest.raises(InputError):
            block_years(days("2001-01-01", 3), "13-01")
        with pytest.raises(InputError):
            block_years(days("2001-01-01", 3), "02-29")


class TestConcatenate:
    def test_paper_arithmetic_27x96(self):
        series = [
            maxima_series(f"IC{i:02d}", np.arange(2005, 2101), np.full(96, float(i + 1)))
            for i in range(27)
        ]
        pooled = concatenate_maxima(series)
        assert len(pooled) == 27 * 96

    def test_single_input_identity(self):
        s = maxima_series("IC01", [2001, 2002], [4.0, 5.0])
        out = concatenate_maxima([s])
        np.testing.assert_array_equal(out.member_ids, s.member_ids)
        np.testing.assert_array_equal(out.years, s.years)
        np.testing.assert_array_equal(out.maxima, s.maxima)

    def test_order_invariance(self):
        a = maxima_series("IC01", [2001, 2002], [1.0, 2.0])
        b = maxima_series("IC02", [2001, 2002], [3.0, 4.0])
        ab = concatenate_maxima([a, b])
        ba = concatenate_maxima([b, a])
        np.testing.assert_array_equal(ab.member_ids, ba.member_ids)
        np.testing.assert_array_equal(ab.years, ba.years)
        np.testing.assert_array_equal(ab.maxima, ba.maxima)

    def test_cell_mismatch(self):
        a = maxima_series("IC01", [2001], [1.0], cell="C1")
        b = maxima_series("IC02", [2001], [1.0], cell="C2")
        with pytest.raises(InputError, match="cell_id mismatch"):
            concatenate_maxima([a, b])

    def test_duration_mismatch(self):
        a = maxima_series("IC01", [2001], [1.0], d=1)
        b = maxima_series("IC02", [2001], [1.0], d=3)
        with pytest.raises(InputError, match="duration mismatch"):
            concatenate_maxima([a, b])

    def test_duplicate_member_year(self):
        a = maxima_series("IC01", [2001], [1.0])
        b = maxima_series("IC01", [2001], [2.0])
        with pytest.raises(InputError, match="duplicate"):
            concatenate_maxima([a, b])


class TestPooledMoments:
    def test_hand_count(self):
        coll = EnsembleCollection(
            (daily([1, 2], member="IC01"), daily([3, 4], member="IC02"))
        )
        pm = pooled_moments(coll)
        assert pm.mean == 2.5
        assert pm.n_points == 4
        assert pm.n_lag_pairs == 2

    def test_paper_lag_pair_count(self):
        members = tuple(
            daily(np.random.default_rng(i).random(96), member=f"IC{i:02d}")
            for i in range(3)
        )
        pm = pooled_moments(EnsembleCollection(members))
        assert pm.n_lag_pairs == 3 * 95

    def test_constant_members_flag_autocorr(self):
        coll = EnsembleCollection(
            (daily([2, 2, 2], member="IC01"), daily([2, 2, 2], member="IC02"))
        )
        pm = pooled_moments(coll)
        assert pm.std_dev == 0.0
        assert pm.lag1_autocorr is None

    def test_lag_pairs_never_straddle_members(self):
        # members [0,1] and [0,1]: within-member pairs only give r1 = -0.5
        coll = EnsembleCollection(
            (daily([0, 1], member="IC01"), daily([0, 1], member="IC02"))
        )
        pm = pooled_moments(coll)
        assert pm.lag1_autocorr == pytest.approx(-0.5, abs=1e-15)

    def test_mean_is_length_weighted_member_mean(self):
        rng = np.random.default_rng(8)
        members = tuple(
            daily(rng.random(n), member=f"IC{i}") for i, n in enumerate((50, 120, 365))
        )
        pm = pooled_moments(EnsembleCollection(members))
        weighted = sum(m.values.sum() for m in members) / sum(len(m) for m in members)
        assert pm.mean == pytest.approx(weighted, abs=1e-12)

    def test_autocorr_bounded(self):
        rng = np.random.default_rng(9)
        members = tuple(
            daily(np.cumsum(rng.normal(0, 1, 200)) + 50.0, member=f"IC{i}")
            for i in range(4)
        )
        # offset keeps values nonnegative
        pm = pooled_moments(EnsembleCollection(members))
        assert -1.0 <= pm.lag1_autocorr <= 1.0

    def test_all_members_too_short(self):
        coll = EnsembleCollection((daily([1.0], member="IC01"),))
        with pytest.raises(InputError):
            pooled_moments(coll)


class TestFitConcatenated:
    def test_single_member_reduces_to_direct_fit(self):
        draws = gev_sample(GevParams(20, 5, 0.1), 96, seed=1)
        series = maxima_series("IC01", np.arange(2005, 2101), np.maximum(draws, 0))
        pooled_fit, (rl100,) = fit_concatenated([series], [100.0])
        direct = fit_gev_mle(series.maxima)
        assert pooled_fit.params == direct.params
        assert pooled_fit.n_samples == direct.n_samples
        assert rl100.return_period == 100.0

    def test_two_truth_input_warns(self):
        years = np.arange(2005, 2053)
        members = []
        for i in range(8):
            mu = 20.0 if i < 4 else 60.0
            draws = gev_sample(GevParams(mu, 3, 0.05), 48, seed=i)
            members.append(maxima_series(f"IC{i:02d}", years, np.maximum(draws, 0)))
        with pytest.warns(HeterogeneityWarning):
            fit_concatenated(members, [100.0])

    def test_homogeneous_input_does_not_warn(self):
        years = np.arange(2005, 2101)
        members = [
            maxima_series(
                f"IC{i:02d}",
                years,
                np.maximum(gev_sample(GevParams(20, 5, 0.1), 96, seed=100 + i), 0),
            )
            for i in range(8)
        ]
        import warnings as _w

        with _w.catch_warnings():
            _w.simplefilter("error", HeterogeneityWarning)
            fit, levels = fit_concatenated(members, [30.0, 100.0])
        assert fit.n_samples == 8 * 96
        assert levels[0].level < levels[1].level


class TestDailySeriesValidation:
    def test_rejects_unsorted_dates(self):
        dates = np.array(["2001-01-02", "2001-01-01"], dtype="datetime64[D]")
        with pytest.raises(InputError):
            DailySeries("C1", "IC01", dates, np.array([1.0, 2.0]))

    def test_rejects_negative_values(self):
        with pytest.raises(InputError):
            daily([1.0, -0.5])

    def test_gap_counting(self):
        dates = np.concatenate([days("2001-01-01", 3), days("2001-01-10", 2)])
        s = daily([1, 1, 1, 1, 1], dates=dates)
        assert s.n_gap_days == 6
