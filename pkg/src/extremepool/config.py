"""Run configuration: defaults, JSON config files and flag overrides.

The resolved configuration is echoed verbatim into every output artifact
so each file records how it was produced.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class RunConfig:
    durations: tuple[int, ...] = (1, 2, 3, 5, 6, 10)
    return_periods: tuple[float, ...] = (30.0, 100.0)
    confidence: float = 0.95
    ks_alpha: float = 0.05
    window_years: int = 30
    window_stride: int = 1
    year_start: str = "01-01"
    coverage_threshold: float = 0.90
    qmap_knots: int = 99
    band_width: float = 1.0
    bootstrap_samples: int = 1000
    seed: int = 0
    workers: int = 1
    strict: bool = True

    def __post_init__(self) -> None:
        if not all(d >= 1 for d in self.durations):
            raise ConfigError("durations must be positive")
        if not all(t > 1 for t in self.return_periods):
            raise ConfigError("return periods must exceed 1 year")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("confidence must lie in (0, 1)")
        if not 0.0 < self.ks_alpha < 1.0:
            raise ConfigError("ks_alpha must lie in (0, 1)")
        if self.window_years < 1 or self.window_stride < 1:
            raise ConfigError("window length and stride must be positive")
        if not 0.0 < self.coverage_threshold <= 1.0:
            raise ConfigError("coverage threshold must lie in (0, 1]")
        if self.qmap_knots < 1:
            raise ConfigError("qmap_knots must be positive")
        if self.band_width <= 0:
            raise ConfigError("band width must be positive")
        if self.bootstrap_samples < 10:
            raise ConfigError("bootstrap_samples must be at least 10")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        object.__setattr__(self, "durations", tuple(int(d) for d in self.durations))
        object.__setattr__(
            self, "return_periods", tuple(float(t) for t in self.return_periods)
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["durations"] = list(self.durations)
        d["return_periods"] = list(self.return_periods)
        return d

    def replace(self, **overrides) -> "RunConfig":
        """Copy with non-None overrides applied."""
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, value in overrides.items():
            if key not in current:
                raise ConfigError(f"unknown config field {key!r}")
            if value is not None:
                current[key] = value
        return RunConfig(**current)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ConfigError(f"unknown config keys in {path}: {unknown}")
        try:
            return cls().replace(**payload)
        except TypeError as exc:
            raise ConfigError(f"bad config value in {path}: {exc}") from exc
