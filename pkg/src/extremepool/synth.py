"""Ground-truth synthetic ensembles and independent oracles.

Homogeneous specs model initial-condition ensembles (one exact generating
process, members differing only by their random stream); a heterogeneity
spec perturbs per-member parameters to mimic structurally different
models. All randomness flows from PCG64 generators seeded through
``numpy.random.SeedSequence((master_seed, *path))`` so every member/stream
is reproducible in isolation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, EstimationError
from .gev import (
    GevParams,
    ReturnLevelEstimate,
    _refit_batch,
    fit_gev_mle,
    gev_quantile,
    gev_sample,
    return_level,
)
from .maxima import BlockMaximaSeries, DailySeries, fit_concatenated

# stream tags for SeedSequence((seed, tag, ...)) derivation
_TAG_HETEROGENEITY = 1
_TAG_MAXIMA = 2
_TAG_DAILY = 3
_TAG_TEMPERATURE = 4
_TAG_SUBSET = 5


def derive_seed(master_seed: int, *path: int) -> int:
    """64-bit child seed for a purpose-specific stream."""
    return int(np.random.SeedSequence((master_seed, *path)).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class Heterogeneity:
    """Uniform +-spread applied to per-member parameters (MME analog)."""

    location_spread: float = 0.0
    scale_spread: float = 0.0
    shape_spread: float = 0.0
    fraction_spread: float = 0.0

    def any_active(self) -> bool:
        return any(
            s > 0
            for s in (
                self.location_spread,
                self.scale_spread,
                self.shape_spread,
                self.fraction_spread,
            )
        )


@dataclass(frozen=True)
class DailyGenParams:
    """Daily weather generator: Bernoulli wet days, gamma wet amounts,
    optional sinusoidal seasonality and a paired convective component."""

    wet_prob: float = 0.7
    gamma_shape: float = 0.6
    gamma_scale: float = 8.0
    seasonal_amplitude: float = 0.0
    convective_fraction: float | None = None
    convective_noise_sd: float = 0.0
    temperature_base: float = 288.0
    temperature_trend: float = 0.0
    temperature_noise_sd: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.wet_prob <= 1.0:
            raise ConfigError("wet_prob must lie in [0, 1]")
        if self.gamma_shape <= 0 or self.gamma_scale <= 0:
            raise ConfigError("gamma parameters must be positive")
        if not 0.0 <= self.seasonal_amplitude < 1.0:
            raise ConfigError("seasonal_amplitude must lie in [0, 1)")
        if self.convective_fraction is not None and not 0.0 <= self.convective_fraction <= 1.0:
            raise ConfigError("convective_fraction must lie in [0, 1]")
        if self.convective_noise_sd < 0 or self.temperature_noise_sd < 0:
            raise ConfigError("noise standard deviations must be nonnegative")


@dataclass(frozen=True, eq=False)
class SynthSpec:
    """Spec for one synthetic ensemble: exactly one of ``truth`` (maxima
    level) or ``daily`` (weather generator) must be set."""

    n_members: int
    n_years: int
    seed: int
    truth: GevParams | None = None
    daily: DailyGenParams | None = None
    heterogeneity: Heterogeneity | None = None
    cells: tuple[tuple[str, float, float], ...] = (("C000", 40.0, -100.0),)
    start_year: int = 2005
    duration_days: int = 1

    def __post_init__(self) -> None:
        if self.n_members < 1 or self.n_years < 1:
            raise ConfigError("n_members and n_years must be at least 1")
        if (self.truth is None) == (self.daily is None):
            raise ConfigError("set exactly one of truth or daily")
        if not self.cells:
            raise ConfigError("at least one cell is required")
        object.__setattr__(self, "cells", tuple(tuple(c) for c in self.cells))

    def member_id(self, index: int) -> str:
        return f"IC{index + 1:02d}"

    def to_json(self) -> str:
        payload = {
            "n_members": self.n_members,
            "n_years": self.n_years,
            "seed": self.seed,
            "start_year": self.start_year,
            "duration_days": self.duration_days,
            "cells": [list(c) for c in self.cells],
        }
        if self.truth is not None:
            payload["truth"] = {
                "location": self.truth.location,
                "scale": self.truth.scale,
                "shape": self.truth.shape,
            }
        if self.daily is not None:
            payload["daily"] = asdict(self.daily)
        if self.heterogeneity is not None:
            payload["heterogeneity"] = asdict(self.heterogeneity)
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid spec JSON: {exc}") from exc
        try:
            truth = GevParams(**payload["truth"]) if "truth" in payload else None
            daily = DailyGenParams(**payload["daily"]) if "daily" in payload else None
            het = (
                Heterogeneity(**payload["heterogeneity"])
                if "heterogeneity" in payload
                else None
            )
            return cls(
                n_members=int(payload["n_members"]),
                n_years=int(payload["n_years"]),
                seed=int(payload["seed"]),
                truth=truth,
                daily=daily,
                heterogeneity=het,
                cells=tuple(tuple(c) for c in payload.get("cells", (("C000", 40.0, -100.0),))),
                start_year=int(payload.get("start_year", 2005)),
                duration_days=int(payload.get("duration_days", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad spec field: {exc}") from exc


def _member_params(spec: SynthSpec, index: int) -> GevParams:
    truth = spec.truth
    het = spec.heterogeneity
    if het is None or not het.any_active():
        return truth
    rng = np.random.default_rng(
        np.random.SeedSequence((spec.seed, _TAG_HETEROGENEITY, index))
    )
    loc = truth.location + rng.uniform(-het.location_spread, het.location_spread)
    scale = max(truth.scale + rng.uniform(-het.scale_spread, het.scale_spread), 1e-6)
    shape = truth.shape + rng.uniform(-het.shape_spread, het.shape_spread)
    return GevParams(loc, scale, shape)


def generate_maxima_ensemble(spec: SynthSpec) -> list[BlockMaximaSeries]:
    """One maxima series per member, iid draws from the (per-member) truth."""
    if spec.truth is None:
        raise ConfigError("spec has no maxima-level truth")
    cell_id = spec.cells[0][0]
    years = np.arange(spec.start_year, spec.start_year + spec.n_years, dtype=np.int64)
    out = []
    for i in range(spec.n_members):
        params = _member_params(spec, i)
        draws = gev_sample(params, spec.n_years, derive_seed(spec.seed, _TAG_MAXIMA, i))
        # block maxima are depths; keep the synthetic sample physical
        draws = np.maximum(draws, 0.0)
        out.append(
            BlockMaximaSeries(
                cell_id=cell_id,
                duration_days=spec.duration_days,
                member_ids=np.array([spec.member_id(i)] * spec.n_years, dtype=object),
                years=years,
                maxima=draws,
            )
        )
    return out


@dataclass(frozen=True, eq=False)
class DailyEnsemble:
    """Generated daily ensemble: totals, optional paired convective series,
    and per-member annual mean surface temperatures."""

    totals: tuple[DailySeries, ...]
    convectives: tuple[DailySeries, ...] | None
    temperatures: dict[str, dict[int, float]]


def _calendar(start_year: int, n_years: int) -> np.ndarray:
    start = np.datetime64(f"{start_year:04d}-01-01", "D")
    end = np.datetime64(f"{start_year + n_years:04d}-01-01", "D")
    return np.arange(start, end)


def generate_daily_ensemble(spec: SynthSpec) -> DailyEnsemble:
    """Bernoulli-gamma daily ensemble over the spec's cells and members."""
    if spec.daily is None:
        raise ConfigError("spec has no daily generator parameters")
    gen = spec.daily
    dates = _calendar(spec.start_year, spec.n_years)
    doy = (dates - dates.astype("datetime64[Y]")).astype(int) + 1
    seasonal = 1.0 + gen.seasonal_amplitude * np.sin(2.0 * np.pi * (doy - 1) / 365.25)
    totals = []
    convectives = [] if gen.convective_fraction is not None else None
    temperatures: dict[str, dict[int, float]] = {}
    for i in range(spec.n_members):
        member = spec.member_id(i)
        if gen.convective_fraction is not None:
            het = spec.heterogeneity
            spread = het.fraction_spread if het is not None else 0.0
            frac = gen.convective_fraction
            if spread > 0:
                rng_het = np.random.default_rng(
                    np.random.SeedSequence((spec.seed, _TAG_HETEROGENEITY, i))
                )
                frac = float(np.clip(frac + rng_het.uniform(-spread, spread), 0.0, 1.0))
        for c_index, (cell_id, _lat, _lon) in enumerate(spec.cells):
            rng = np.random.default_rng(
                np.random.SeedSequence((spec.seed, _TAG_DAILY, i, c_index))
            )
            wet = rng.random(dates.size) < gen.wet_prob
            amounts = rng.gamma(gen.gamma_shape, gen.gamma_scale, dates.size) * seasonal
            values = np.where(wet, amounts, 0.0)
            totals.append(
                DailySeries(cell_id=cell_id, member_id=member, dates=dates, values=values)
            )
            if convectives is not None:
                conv = values * frac
                if gen.convective_noise_sd > 0:
                    conv = conv + rng.normal(0.0, gen.convective_noise_sd, dates.size)
                conv = np.clip(conv, 0.0, values)
                convectives.append(
                    DailySeries(cell_id=cell_id, member_id=member, dates=dates, values=conv)
                )
        rng_t = np.random.default_rng(
            np.random.SeedSequence((spec.seed, _TAG_TEMPERATURE, i))
        )
        temperatures[member] = {
            int(spec.start_year + k): float(
                gen.temperature_base
                + gen.temperature_trend * k
                + (rng_t.normal(0.0, gen.temperature_noise_sd) if gen.temperature_noise_sd > 0 else 0.0)
            )
            for k in range(spec.n_years)
        }
    return DailyEnsemble(
        totals=tuple(totals),
        convectives=tuple(convectives) if convectives is not None else None,
        temperatures=temperatures,
    )


def bootstrap_ci_oracle(
    sample,
    T: float,
    B: int = 1000,
    confidence: float = 0.95,
    seed: int = 0,
) -> ReturnLevelEstimate:
    """Parametric-bootstrap return-level interval, independent of the
    delta method.

    Fits once, draws B fresh samples of the same size from the fitted
    distribution, refits each (warm-started at the original optimum) and
    takes empirical quantiles of the B return levels. Errors out when more
    than 10% of refits fail.
    """
    if B < 10:
        raise ConfigError("B must be at least 10")
    fit = fit_gev_mle(sample)
    if not fit.converged:
        raise EstimationError("bootstrap oracle requires a converged base fit")
    n = fit.n_samples
    rng = np.random.default_rng(seed)
    tiny = 2.0**-53
    u = np.clip(rng.random((B, n)), tiny, 1.0 - tiny)
    resamples = np.sort(gev_quantile(u, fit.params), axis=1)
    p0 = np.array(
        [fit.params.location, np.log(fit.params.scale), fit.params.shape]
    )
    steps = np.array([0.02 * fit.params.scale, 0.02, 0.02])
    params, ok = _refit_batch(resamples, p0, steps)
    n_failed = int(np.sum(~ok))
    if n_failed > 0.10 * B:
        raise EstimationError(f"{n_failed}/{B} bootstrap refits failed to converge")
    mu, sigma, xi = params[ok, 0], params[ok, 1], params[ok, 2]
    p = 1.0 - 1.0 / float(T)
    loglog = np.log(-np.log(p))
    gumbel = np.abs(xi) < 1e-8
    levels = np.where(
        gumbel,
        mu - sigma * loglog,
        mu + sigma * np.expm1(-np.where(gumbel, 1.0, xi) * loglog) / np.where(gumbel, 1.0, xi),
    )
    alpha = 1.0 - confidence
    lo, hi = np.quantile(levels, [alpha / 2.0, 1.0 - alpha / 2.0], method="linear")
    point = return_level(fit, T, confidence).level
    return ReturnLevelEstimate(
        return_period=float(T),
        level=float(point),
        ci_low=float(min(lo, point)),
        ci_high=float(max(hi, point)),
        confidence=float(confidence),
        method="bootstrap",
    )


@dataclass(frozen=True, eq=False)
class ConcatCurveRow:
    subset_size: int
    repeat: int
    level: float
    ci_low: float
    ci_high: float

    @property
    def width(self) -> float:
        return self.ci_high - self.ci_low


@dataclass(frozen=True, eq=False)
class ConcatCurve:
    """CI width versus number of concatenated members."""

    rows: tuple[ConcatCurveRow, ...]

    def widths(self, k: int) -> np.ndarray:
        return np.array([r.width for r in self.rows if r.subset_size == k])

    def mean_width(self, k: int) -> float:
        return float(np.mean(self.widths(k)))

    @property
    def subset_sizes(self) -> list[int]:
        return sorted({r.subset_size for r in self.rows})


def concatenation_curve(
    spec: SynthSpec,
    T: float = 100.0,
    subset_sizes: Sequence[int] = (),
    repeats: int = 10,
    seed: int = 0,
    confidence: float = 0.95,
) -> ConcatCurve:
    """Progressive-concatenation experiment: fit random member subsets of
    each size and record the return-level CI width.

    Size-1 subsets walk the members round-robin, so with repeats equal to
    (a multiple of) the member count the k=1 mean width is exactly the
    mean over per-member fits.
    """
    members = generate_maxima_ensemble(spec)
    subset_sizes = list(subset_sizes) or list(range(1, spec.n_members + 1))
    if max(subset_sizes) > spec.n_members or min(subset_sizes) < 1:
        raise ConfigError("subset sizes must lie in [1, n_members]")
    if repeats < 1:
        raise ConfigError("repeats must be at least 1")
    rows = []
    for k in subset_sizes:
        for r in range(repeats):
            if k == 1:
                chosen = [members[r % spec.n_members]]
            elif k == spec.n_members:
                chosen = members
            else:
                rng = np.random.default_rng(
                    np.random.SeedSequence((seed, _TAG_SUBSET, k, r))
                )
                idx = rng.choice(spec.n_members, size=k, replace=False)
                chosen = [members[j] for j in sorted(idx)]
            _, (rl,) = fit_concatenated(chosen, [T], confidence)
            rows.append(
                ConcatCurveRow(
                    subset_size=int(k),
                    repeat=int(r),
                    level=rl.level,
                    ci_low=rl.ci_low,
                    ci_high=rl.ci_high,
                )
            )
    return ConcatCurve(rows=tuple(rows))
