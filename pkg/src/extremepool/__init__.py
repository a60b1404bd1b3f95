"""Extreme-value analysis of multi-member ensemble precipitation.

Pooling (concatenating) the annual-maxima samples of initial-condition
ensemble members that share one generating process yields single return
level estimates with markedly narrower confidence intervals, and the
reduction carries through to depth-duration-frequency curves.
"""

__version__ = "0.1.0"

from .analysis import (
    BandFractionStats,
    BandStats,
    DdfTable,
    RegionMask,
    ScalingResult,
    TestResult,
    WindowedEstimates,
    convective_fraction_bands,
    ddf,
    kde,
    kruskal_wallis,
    moving_window_rl,
    percentile_scaling,
    regional_aggregate,
    t_test_independent,
)
from .config import RunConfig
from .errors import (
    CIWarning,
    ClippingWarning,
    ConfigError,
    CoverageWarning,
    EstimationError,
    HeterogeneityWarning,
    InputError,
    PipelineError,
    SampleSizeWarning,
    ShapeBoundWarning,
)
from .gev import (
    GevFit,
    GevParams,
    KsResult,
    ReturnLevelEstimate,
    fit_gev_mle,
    gev_cdf,
    gev_loglik,
    gev_quantile,
    gev_sample,
    ks_test,
    return_level,
)
from .maxima import (
    BlockMaximaSeries,
    DailySeries,
    EnsembleCollection,
    PooledMoments,
    accumulate_duration,
    annual_max_days,
    annual_maxima,
    block_years,
    concatenate_maxima,
    fit_concatenated,
    pooled_moments,
)
from .qmap import QuantileMap, apply_quantile_map, build_quantile_map
from .synth import (
    ConcatCurve,
    DailyEnsemble,
    DailyGenParams,
    Heterogeneity,
    SynthSpec,
    bootstrap_ci_oracle,
    concatenation_curve,
    derive_seed,
    generate_daily_ensemble,
    generate_maxima_ensemble,
)

__all__ = [name for name in dir() if not name.startswith("_")]
