"""Exceptions and warning categories shared across the package."""


class PipelineError(Exception):
    """Base class for errors raised by this package."""


class InputError(PipelineError):
    """Malformed or unusable input data (CLI exit code 2)."""


class EstimationError(PipelineError):
    """A fit or statistical estimate could not be produced (CLI exit code 3)."""


class ConfigError(PipelineError):
    """Invalid configuration value or file (CLI exit code 4)."""


class ShapeBoundWarning(UserWarning):
    """|shape| >= 0.5: MLE variance is ill-behaved in this regime."""


class SampleSizeWarning(UserWarning):
    """Fewer block maxima than the minimum for a trustworthy fit."""


class HeterogeneityWarning(UserWarning):
    """Pooled members look like they come from different generating processes."""


class CoverageWarning(UserWarning):
    """Years dropped from maxima extraction for insufficient daily coverage."""


class ClippingWarning(UserWarning):
    """Bias-corrected values clipped at zero."""


class CIWarning(UserWarning):
    """Numerical problem while building a confidence interval."""
