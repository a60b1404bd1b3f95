"""Empirical quantile-mapping bias correction of daily model output.

A map is trained on the overlap of a model-historical series and an
observational reference: model values are sent through the model's
empirical CDF and out through the observed quantile function. Knots sit at
percentiles 1..n; beyond the outermost knots the correction degrades to a
constant additive offset.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ClippingWarning, InputError
from .maxima import DailySeries

MIN_TRAIN_DAYS = 365


@dataclass(frozen=True, eq=False)
class QuantileMap:
    """Trained knot pairs (model quantile -> observed quantile) for one cell."""

    cell_id: str
    probs: np.ndarray
    model_quantiles: np.ndarray
    obs_quantiles: np.ndarray
    train_start: np.datetime64
    train_end: np.datetime64

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        mq = np.asarray(self.model_quantiles, dtype=float)
        oq = np.asarray(self.obs_quantiles, dtype=float)
        if not (probs.shape == mq.shape == oq.shape) or probs.ndim != 1 or probs.size < 2:
            raise InputError("probs and both quantile lists must be 1-d, equal length >= 2")
        if np.any(probs <= 0) or np.any(probs >= 1) or np.any(np.diff(probs) <= 0):
            raise InputError("probs must be strictly increasing inside (0, 1)")
        if np.any(np.diff(mq) < 0) or np.any(np.diff(oq) < 0):
            raise InputError("quantile knots must be nondecreasing")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "model_quantiles", mq)
        object.__setattr__(self, "obs_quantiles", oq)
        object.__setattr__(self, "train_start", np.datetime64(self.train_start, "D"))
        object.__setattr__(self, "train_end", np.datetime64(self.train_end, "D"))


def build_quantile_map(
    model_hist: DailySeries, obs: DailySeries, n_quantiles: int = 99
) -> QuantileMap:
    """Train a quantile map on the date overlap of the two series.

    Knot probabilities are k/(n_quantiles+1); empirical quantiles use
    linear interpolation between order statistics (the type-7 convention
    used throughout this package).
    """
    if model_hist.cell_id != obs.cell_id:
        raise InputError(
            f"cell mismatch: model {model_hist.cell_id!r} vs obs {obs.cell_id!r}"
        )
    if n_quantiles < 1:
        raise InputError("need at least one quantile knot")
    if len(model_hist) == 0 or len(obs) == 0:
        raise InputError("empty training series")
    start = max(model_hist.dates[0], obs.dates[0])
    end = min(model_hist.dates[-1], obs.dates[-1])
    model_vals = model_hist.values[(model_hist.dates >= start) & (model_hist.dates <= end)]
    obs_vals = obs.values[(obs.dates >= start) & (obs.dates <= end)]
    if model_vals.size < MIN_TRAIN_DAYS or obs_vals.size < MIN_TRAIN_DAYS:
        raise InputError(
            f"training overlap too short: {model_vals.size} model days and "
            f"{obs_vals.size} obs days inside [{start}, {end}], need {MIN_TRAIN_DAYS}"
        )
    probs = np.arange(1, n_quantiles + 1, dtype=float) / (n_quantiles + 1)
    return QuantileMap(
        cell_id=model_hist.cell_id,
        probs=probs,
        model_quantiles=np.quantile(model_vals, probs, method="linear"),
        obs_quantiles=np.quantile(obs_vals, probs, method="linear"),
        train_start=start,
        train_end=end,
    )


def apply_quantile_map(qm: QuantileMap, series: DailySeries) -> DailySeries:
    """Correct a daily series through the trained map.

    Values between knots interpolate linearly along the knot pairs; values
    beyond the outermost knots are shifted by that knot's additive delta.
    Zeros go through the same function (no wet-day adjustment). Corrected
    values are clipped at zero and clips are reported via ClippingWarning.
    """
    if qm.cell_id != series.cell_id:
        raise InputError(f"cell mismatch: map {qm.cell_id!r} vs series {series.cell_id!r}")
    v = series.values
    lo_m, hi_m = qm.model_quantiles[0], qm.model_quantiles[-1]
    lo_delta = qm.obs_quantiles[0] - lo_m
    hi_delta = qm.obs_quantiles[-1] - hi_m
    corrected = np.interp(v, qm.model_quantiles, qm.obs_quantiles)
    corrected = np.where(v < lo_m, v + lo_delta, corrected)
    corrected = np.where(v > hi_m, v + hi_delta, corrected)
    n_clipped = int(np.sum(corrected < 0.0))
    if n_clipped:
        warnings.warn(
            f"{series.cell_id}/{series.member_id}: {n_clipped} corrected values "
            "clipped at zero",
            ClippingWarning,
            stacklevel=2,
        )
        corrected = np.maximum(corrected, 0.0)
    return DailySeries(
        cell_id=series.cell_id,
        member_id=series.member_id,
        dates=series.dates,
        values=corrected,
    )
