"""Command surface tying ingestion, estimation and report emission together.

Exit codes: 0 success, 2 malformed input, 3 estimation failure (any
non-converged fit in strict mode), 4 configuration error. Report commands
render a matplotlib figure next to the delimited output unless --no-plot
is given. Every option can also be set through environment variables with
the EXTREMEPOOL_ prefix (e.g. EXTREMEPOOL_FIT_MODE).
"""

from __future__ import annotations

import dataclasses
import functools
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__, formats, plots
from .analysis import (
    convective_fraction_bands,
    ddf as build_ddf,
    kde as compute_kde,
    kruskal_wallis,
    moving_window_rl,
    percentile_scaling,
    regional_aggregate,
    RegionMask,
    t_test_independent,
)
from .config import RunConfig
from .errors import ClippingWarning, ConfigError, EstimationError, InputError
from .gev import fit_gev_mle, ks_test, return_level
from .maxima import annual_maxima
from .qmap import apply_quantile_map, build_quantile_map
from .synth import (
    SynthSpec,
    concatenation_curve,
    generate_daily_ensemble,
    generate_maxima_ensemble,
)

EXIT_INPUT = 2
EXIT_ESTIMATION = 3
EXIT_CONFIG = 4

CONTEXT = {
    "help_option_names": ["-h", "--help"],
    "auto_envvar_prefix": "EXTREMEPOOL",
}


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InputError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INPUT)
        except EstimationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_ESTIMATION)
        except ConfigError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)

    return wrapper


@click.group(context_settings=CONTEXT)
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON file overriding the default run configuration.")
@click.option("--seed", type=int, default=None, help="Master seed.")
@click.option("--workers", type=int, default=None,
              help="Worker processes for independent per-cell work.")
@click.option("--strict/--lenient", "strict", default=None,
              help="Fail the run on any non-converged fit (default) or "
                   "continue and report failures in an errors sidecar.")
@click.pass_context
def main(ctx, config_path, seed, workers, strict):
    """Extreme-value analysis of ensemble precipitation with pooled maxima."""
    ctx.obj = {
        "config_path": config_path,
        "seed": seed,
        "workers": workers,
        "strict": strict,
    }


def resolve_config(ctx, **overrides) -> RunConfig:
    obj = ctx.obj or {}
    base = (
        RunConfig.from_file(obj["config_path"])
        if obj.get("config_path")
        else RunConfig()
    )
    base = base.replace(
        seed=obj.get("seed"), workers=obj.get("workers"), strict=obj.get("strict")
    )
    return base.replace(**overrides)


def _parse_floats(raw: str) -> tuple[float, ...]:
    try:
        values = tuple(float(tok) for tok in raw.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"bad number list {raw!r}: {exc}") from exc
    if not values:
        raise ConfigError(f"empty number list {raw!r}")
    return values


def _parse_ints(raw: str) -> tuple[int, ...]:
    return tuple(int(v) for v in _parse_floats(raw))


def _parse_period(raw: str) -> tuple[int, int]:
    try:
        start_s, end_s = raw.split("-")
        start, end = int(start_s), int(end_s)
    except ValueError as exc:
        raise ConfigError(f"period must look like YYYY-YYYY, got {raw!r}") from exc
    if end < start:
        raise ConfigError(f"period {raw!r} ends before it starts")
    return start, end


def _pmap(fn, items, workers: int):
    """Order-preserving map over independent work items."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _collect_errors(cfg: RunConfig, errors: list[dict], out_path) -> None:
    """Strict mode aborts on unit failures; lenient mode writes the sidecar."""
    if not errors:
        return
    if cfg.strict:
        first = errors[0]
        message = (
            f"{len(errors)} work unit(s) failed (strict mode); first: "
            f"{first['item']}: {first['message']}"
        )
        if any(e["kind"] == "estimation" for e in errors):
            raise EstimationError(message)
        raise InputError(message)
    formats.write_errors_sidecar(out_path, errors)


def _figure_path(output: str | Path, suffix: str = "") -> Path:
    base = Path(output)
    stem = base.stem if base.suffix else base.name
    return base.with_name(f"{stem}{suffix}.png")


# ---------------------------------------------------------------------------
# synthetic data


@main.command()
@click.argument("spec_json", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--out-dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
@handle_errors
def synth(ctx, spec_json, out_dir):
    """Generate a synthetic dataset in the CSV ingestion formats."""
    cfg = resolve_config(ctx)
    spec = SynthSpec.from_json(Path(spec_json).read_text(encoding="utf-8"))
    if (ctx.obj or {}).get("seed") is not None:
        spec = dataclasses.replace(spec, seed=cfg.seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = formats.build_meta(cfg, [spec_json])
    grid = {cell: (lat, lon) for cell, lat, lon in spec.cells}
    formats.write_grid_csv(out / "grid.csv", grid, meta)
    if spec.truth is not None:
        formats.write_maxima_csv(out / "maxima.csv", generate_maxima_ensemble(spec), meta)
        click.echo(f"wrote {out / 'maxima.csv'}")
    else:
        ensemble = generate_daily_ensemble(spec)
        formats.write_daily_csv(out / "daily.csv", ensemble.totals, meta)
        click.echo(f"wrote {out / 'daily.csv'}")
        if ensemble.convectives is not None:
            formats.write_daily_csv(out / "convective.csv", ensemble.convectives, meta)
            click.echo(f"wrote {out / 'convective.csv'}")
        temps = {
            (cell, member): per_year
            for cell, _lat, _lon in spec.cells
            for member, per_year in ensemble.temperatures.items()
        }
        formats.write_temperature_csv(out / "temperature.csv", temps, meta)
        click.echo(f"wrote {out / 'temperature.csv'}")


# ---------------------------------------------------------------------------
# annual maxima


def _amax_unit(args):
    series, duration, coverage, year_start = args
    try:
        return (
            "ok",
            annual_maxima(
                series, duration, coverage_threshold=coverage, year_start=year_start
            ),
        )
    except InputError as exc:
        return (
            "err",
            {
                "item": f"{series.cell_id}/{series.member_id}",
                "stage": "amax",
                "kind": "input",
                "message": str(exc),
            },
        )


@main.command()
@click.argument("daily_csv", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("-d", "--duration", type=int, default=1, show_default=True,
              help="Accumulation duration in days.")
@click.option("--year-start", default=None, help="Block-year start as MM-DD.")
@click.option("--coverage", type=float, default=None,
              help="Minimum fraction of days a year needs to contribute.")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def amax(ctx, daily_csv, duration, year_start, coverage, output):
    """Extract d-day annual maxima from daily series CSVs."""
    cfg = resolve_config(ctx, year_start=year_start, coverage_threshold=coverage)
    if duration < 1:
        raise ConfigError("duration must be at least 1 day")
    series = [s for path in daily_csv for s in formats.read_daily_csv(path)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        results = _pmap(
            _amax_unit,
            [(s, duration, cfg.coverage_threshold, cfg.year_start) for s in series],
            cfg.workers,
        )
    maxima = [payload for kind, payload in results if kind == "ok"]
    errors = [payload for kind, payload in results if kind == "err"]
    if not maxima:
        raise InputError("no (cell, member) series produced any annual maxima")
    formats.write_maxima_csv(output, maxima, formats.build_meta(cfg, daily_csv))
    _collect_errors(cfg, errors, output)
    click.echo(f"wrote {output} ({sum(len(m) for m in maxima)} maxima)")


# ---------------------------------------------------------------------------
# fitting


def _fit_unit(args):
    key, values, alpha = args
    cell, duration, member = key
    try:
        fit = fit_gev_mle(values)
        ks = ks_test(values, fit.params, alpha)
        record = formats.FitRecord(
            cell_id=cell, duration_days=duration, member_id=member, fit=fit, ks=ks
        )
        if not fit.converged:
            return (
                "err",
                {
                    "item": f"{cell}/d{duration}" + (f"/{member}" if member else ""),
                    "stage": "fit",
                    "kind": "estimation",
                    "message": "fit did not converge",
                },
                record,
            )
        return ("ok", None, record)
    except (EstimationError, InputError) as exc:
        return (
            "err",
            {
                "item": f"{cell}/d{duration}" + (f"/{member}" if member else ""),
                "stage": "fit",
                "kind": "estimation" if isinstance(exc, EstimationError) else "input",
                "message": str(exc),
            },
            None,
        )


@main.command()
@click.argument("maxima_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--concat", "mode", flag_value="concat", default=True,
              help="Pool members per cell before fitting (default).")
@click.option("--per-member", "mode", flag_value="per_member",
              help="Fit every member separately.")
@click.option("--ks-alpha", type=float, default=None,
              help="Significance level for the goodness-of-fit gate.")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def fit(ctx, maxima_csv, mode, ks_alpha, output):
    """Fit GEV distributions to annual maxima and store a fit artifact."""
    cfg = resolve_config(ctx, ks_alpha=ks_alpha)
    units = []
    for series in formats.read_maxima_csv(maxima_csv):
        if mode == "concat":
            pooled = series.canonical()
            units.append(
                ((series.cell_id, series.duration_days, None), pooled.maxima, cfg.ks_alpha)
            )
        else:
            for member_series in series.split_members():
                units.append(
                    (
                        (
                            series.cell_id,
                            series.duration_days,
                            str(member_series.member_ids[0]),
                        ),
                        member_series.maxima,
                        cfg.ks_alpha,
                    )
                )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        results = _pmap(_fit_unit, units, cfg.workers)
    records = [record for _, _, record in results if record is not None]
    errors = [err for _, err, _ in results if err is not None]
    if not records:
        first = errors[0]["message"] if errors else "no fittable units"
        raise EstimationError(f"no fit succeeded: {first}")
    formats.write_fit_json(output, records, mode, formats.build_meta(cfg, [maxima_csv]))
    _collect_errors(cfg, errors, output)
    click.echo(f"wrote {output} ({len(records)} fits)")


@main.command()
@click.argument("fit_json", type=click.Path(exists=True, dir_okay=False))
@click.option("-T", "--return-periods", "t_raw", default=None,
              help="Comma-separated return periods in years.")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def rl(ctx, fit_json, t_raw, output):
    """Evaluate return levels (with delta-method CIs) from a fit artifact."""
    cfg = resolve_config(
        ctx, return_periods=_parse_floats(t_raw) if t_raw else None
    )
    records, _ = formats.read_fit_json(fit_json)
    rows = []
    errors = []
    for record in records:
        label = record.cell_id + f"/d{record.duration_days}" + (
            f"/{record.member_id}" if record.member_id else ""
        )
        if not record.fit.converged:
            errors.append(
                {"item": label, "stage": "rl", "kind": "estimation",
                 "message": "fit not converged; no return level"}
            )
            continue
        for T in cfg.return_periods:
            est = return_level(record.fit, T, cfg.confidence)
            rows.append(
                (
                    record.cell_id,
                    record.member_id or "",
                    record.duration_days,
                    est.return_period,
                    est.level,
                    est.ci_low,
                    est.ci_high,
                    est.confidence,
                    est.method,
                )
            )
    if not rows:
        raise EstimationError("no converged fits in the artifact")
    rows.sort(key=lambda r: (r[0], r[2], r[1], r[3]))
    formats.write_table_csv(
        output,
        ["cell_id", "member_id", "duration_days", "return_period", "level",
         "ci_low", "ci_high", "confidence", "method"],
        rows,
        formats.build_meta(cfg, [fit_json]),
    )
    _collect_errors(cfg, errors, output)
    click.echo(f"wrote {output} ({len(rows)} return levels)")


# ---------------------------------------------------------------------------
# DDF


@main.command("ddf")
@click.argument("maxima_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["concatenated", "per-member-average"]),
              default="concatenated", show_default=True)
@click.option("-T", "--return-periods", "t_raw", default=None,
              help="Comma-separated return periods in years.")
@click.option("--plot/--no-plot", "do_plot", default=True, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def ddf_cmd(ctx, maxima_csv, mode, t_raw, do_plot, output):
    """Build depth-duration-frequency tables (and curves) per cell."""
    cfg = resolve_config(ctx, return_periods=_parse_floats(t_raw) if t_raw else None)
    mode_key = mode.replace("-", "_")
    by_cell: dict[str, dict[int, list]] = {}
    for series in formats.read_maxima_csv(maxima_csv):
        by_cell.setdefault(series.cell_id, {})[series.duration_days] = [series]
    rows = []
    errors = []
    for cell in sorted(by_cell):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                table = build_ddf(
                    by_cell[cell], cfg.return_periods, mode_key, cfg.confidence
                )
            except (EstimationError, InputError) as exc:
                errors.append(
                    {"item": cell, "stage": "ddf", "kind": "estimation", "message": str(exc)}
                )
                continue
        for duration, reason in table.skipped:
            errors.append(
                {"item": f"{cell}/d{duration}", "stage": "ddf", "kind": "estimation",
                 "message": reason}
            )
        for d in table.durations:
            for T in table.return_periods:
                est = table.estimates[(d, T)]
                rows.append((cell, d, est.return_period, est.level, est.ci_low,
                             est.ci_high, est.confidence, table.mode))
        if do_plot:
            plots.plot_ddf(table, _figure_path(output, f"_{cell}"))
    if not rows:
        raise EstimationError("no DDF cell produced any estimate")
    formats.write_table_csv(
        output,
        ["cell_id", "duration_days", "return_period", "level", "ci_low", "ci_high",
         "confidence", "mode"],
        rows,
        formats.build_meta(cfg, [maxima_csv]),
    )
    _collect_errors(cfg, errors, output)
    click.echo(f"wrote {output} ({len(rows)} table cells)")


# ---------------------------------------------------------------------------
# quantile mapping


@main.group()
def qmap():
    """Quantile-mapping bias correction."""


@qmap.command("build")
@click.argument("model_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("obs_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--knots", type=int, default=None, help="Number of quantile knots.")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def qmap_build(ctx, model_csv, obs_csv, knots, output):
    """Train per-cell quantile maps from a model run and observations."""
    cfg = resolve_config(ctx, qmap_knots=knots)
    model = formats.read_daily_csv(model_csv)
    obs = formats.read_daily_csv(obs_csv)
    model_by_cell: dict[str, list] = {}
    for s in model:
        model_by_cell.setdefault(s.cell_id, []).append(s)
    obs_by_cell: dict[str, list] = {}
    for s in obs:
        obs_by_cell.setdefault(s.cell_id, []).append(s)
    maps = []
    errors = []
    for cell in sorted(set(model_by_cell) & set(obs_by_cell)):
        if len(model_by_cell[cell]) != 1 or len(obs_by_cell[cell]) != 1:
            raise InputError(
                f"cell {cell!r}: quantile-map training needs exactly one model "
                "member and one observation series per cell"
            )
        try:
            maps.append(
                build_quantile_map(
                    model_by_cell[cell][0], obs_by_cell[cell][0], cfg.qmap_knots
                )
            )
        except InputError as exc:
            errors.append(
                {"item": cell, "stage": "qmap-build", "kind": "input", "message": str(exc)}
            )
    if not maps:
        raise InputError("no cell could be trained (no overlap?)")
    formats.write_qmap_json(output, maps, formats.build_meta(cfg, [model_csv, obs_csv]))
    _collect_errors(cfg, errors, output)
    click.echo(f"wrote {output} ({len(maps)} cell maps)")


@qmap.command("apply")
@click.argument("map_json", type=click.Path(exists=True, dir_okay=False))
@click.argument("series_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def qmap_apply(ctx, map_json, series_csv, output):
    """Bias-correct daily series through trained quantile maps."""
    cfg = resolve_config(ctx)
    maps = {m.cell_id: m for m in formats.read_qmap_json(map_json)}
    corrected = []
    errors = []
    for series in formats.read_daily_csv(series_csv):
        if series.cell_id not in maps:
            errors.append(
                {"item": f"{series.cell_id}/{series.member_id}", "stage": "qmap-apply",
                 "kind": "input", "message": "no trained map for this cell"}
            )
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ClippingWarning)
            corrected.append(apply_quantile_map(maps[series.cell_id], series))
        for w in caught:
            if issubclass(w.category, ClippingWarning):
                errors.append(
                    {"item": f"{series.cell_id}/{series.member_id}",
                     "stage": "qmap-apply", "kind": "clipping", "message": str(w.message)}
                )
    if not corrected:
        raise InputError("no series could be corrected")
    formats.write_daily_csv(output, corrected, formats.build_meta(cfg, [map_json, series_csv]))
    if cfg.strict:
        # clipping reports are informational, not failures
        errors = [e for e in errors if e["kind"] != "clipping"]
        _collect_errors(cfg, errors, output)
    else:
        formats.write_errors_sidecar(output, errors)
    click.echo(f"wrote {output} ({len(corrected)} series)")


# ---------------------------------------------------------------------------
# moving windows


@main.command()
@click.argument("maxima_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--window", type=int, default=None, help="Window length in years.")
@click.option("--stride", type=int, default=None, help="Window stride in years.")
@click.option("-T", "--return-period", type=float, default=100.0, show_default=True)
@click.option("--plot/--no-plot", "do_plot", default=True, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def window(ctx, maxima_csv, window, stride, return_period, do_plot, output):
    """Moving-window return levels (members pooled within each window)."""
    cfg = resolve_config(ctx, window_years=window, window_stride=stride)
    rows = []
    errors = []
    for series in formats.read_maxima_csv(maxima_csv):
        label = f"{series.cell_id}/d{series.duration_days}"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            windowed = moving_window_rl(
                series, cfg.window_years, cfg.window_stride, return_period, cfg.confidence
            )
        for start, est in zip(windowed.window_starts, windowed.estimates):
            if est is None:
                continue
            rows.append(
                (series.cell_id, series.duration_days, start,
                 start + cfg.window_years - 1, est.return_period, est.level,
                 est.ci_low, est.ci_high)
            )
        for start, reason in windowed.failures:
            errors.append(
                {"item": f"{label}/window{start}", "stage": "window",
                 "kind": "estimation", "message": reason}
            )
        if do_plot:
            plots.plot_windowed(
                windowed, return_period, label,
                _figure_path(output, f"_{series.cell_id}_d{series.duration_days}"),
            )
    if not rows:
        raise EstimationError("no window produced an estimate")
    formats.write_table_csv(
        output,
        ["cell_id", "duration_days", "window_start", "window_end", "return_period",
         "level", "ci_low", "ci_high"],
        rows,
        formats.build_meta(cfg, [maxima_csv]),
    )
    _collect_errors(cfg, errors, output)
    click.echo(f"wrote {output} ({len(rows)} windows)")


# ---------------------------------------------------------------------------
# regional aggregation


@main.command()
@click.argument("fit_json", type=click.Path(exists=True, dir_okay=False))
@click.argument("mask_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("-T", "--return-period", type=float, default=100.0, show_default=True)
@click.option("-d", "--duration", type=int, default=1, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def region(ctx, fit_json, mask_csv, return_period, duration, output):
    """Regional statistics of return levels with KS gating."""
    cfg = resolve_config(ctx)
    records, _ = formats.read_fit_json(fit_json)
    mask = RegionMask(formats.read_mask_csv(mask_csv))
    per_cell = {}
    errors = []
    for record in records:
        if record.duration_days != duration or record.member_id is not None:
            continue
        if not record.fit.converged:
            errors.append(
                {"item": record.cell_id, "stage": "region", "kind": "estimation",
                 "message": "fit not converged; cell dropped"}
            )
            continue
        per_cell[record.cell_id] = (
            record.fit,
            return_level(record.fit, return_period, cfg.confidence),
            record.ks,
        )
    if not per_cell:
        raise EstimationError("no converged concatenated fits at this duration")
    rows = []
    for label in mask.labels + ["CONUS"]:
        try:
            summary = regional_aggregate(per_cell, mask, label)
        except (InputError, EstimationError) as exc:
            errors.append(
                {"item": label, "stage": "region", "kind": "estimation", "message": str(exc)}
            )
            continue
        rows.append(
            (label, return_period, summary["n_used"], summary["n_excluded"],
             summary["mean"], summary["median"], summary["q25"], summary["q75"],
             summary["iqr"])
        )
    if not rows:
        raise EstimationError("no region produced statistics")
    formats.write_table_csv(
        output,
        ["region", "return_period", "n_used", "n_excluded", "mean", "median",
         "q25", "q75", "iqr"],
        rows,
        formats.build_meta(cfg, [fit_json, mask_csv]),
    )
    _collect_errors(cfg, errors, output)
    click.echo(f"wrote {output} ({len(rows)} regions)")


# ---------------------------------------------------------------------------
# generic statistics over CSV columns


def _read_column_table(path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if line and not line.startswith("#")]
    if not lines:
        raise InputError(f"{path}: empty file (row 0)")
    import csv as _csv

    rows = list(_csv.reader(lines))
    return rows[0], rows[1:]


def _column_values(path, value_column: str) -> np.ndarray:
    header, rows = _read_column_table(path)
    if value_column not in header:
        raise InputError(f"{path}: no column {value_column!r} in {header}")
    idx = header.index(value_column)
    try:
        return np.array([float(r[idx]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: bad value in column {value_column!r}: {exc}") from exc


def _grouped_values(path, value_column: str, group_column: str) -> dict[str, np.ndarray]:
    header, rows = _read_column_table(path)
    for name in (value_column, group_column):
        if name not in header:
            raise InputError(f"{path}: no column {name!r} in {header}")
    vi, gi = header.index(value_column), header.index(group_column)
    groups: dict[str, list[float]] = {}
    try:
        for r in rows:
            groups.setdefault(r[gi], []).append(float(r[vi]))
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: bad value in column {value_column!r}: {exc}") from exc
    return {k: np.array(v) for k, v in sorted(groups.items())}


@main.group()
def stats():
    """Statistical tests and summaries over CSV columns."""


@stats.command("kruskal")
@click.argument("input_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--value-column", default="value", show_default=True)
@click.option("--group-column", default="member_id", show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def stats_kruskal(ctx, input_csv, value_column, group_column, output):
    """Kruskal-Wallis H test across the groups of a column."""
    cfg = resolve_config(ctx)
    groups = _grouped_values(input_csv, value_column, group_column)
    result = kruskal_wallis(list(groups.values()))
    formats.write_json(
        output,
        {**formats.build_meta(cfg, [input_csv]), "test": "kruskal-wallis",
         "groups": list(groups), "H": result.statistic, "p_value": result.p_value},
    )
    click.echo(f"H={result.statistic:.6g} p={result.p_value:.6g}")


@stats.command("ttest")
@click.argument("input_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--value-column", default="value", show_default=True)
@click.option("--group-column", default="member_id", show_default=True)
@click.option("--pooled", is_flag=True, default=False,
              help="Pooled-variance variant instead of Welch.")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def stats_ttest(ctx, input_csv, value_column, group_column, pooled, output):
    """Two-sided independent t test between exactly two groups."""
    cfg = resolve_config(ctx)
    groups = _grouped_values(input_csv, value_column, group_column)
    if len(groups) != 2:
        raise InputError(f"t test needs exactly 2 groups, found {len(groups)}")
    (name_a, a), (name_b, b) = groups.items()
    result = t_test_independent(a, b, pooled_variance=pooled)
    formats.write_json(
        output,
        {**formats.build_meta(cfg, [input_csv]),
         "test": "t-independent" + ("-pooled" if pooled else "-welch"),
         "groups": [name_a, name_b], "t": result.statistic, "p_value": result.p_value},
    )
    click.echo(f"t={result.statistic:.6g} p={result.p_value:.6g}")


@stats.command("iqr")
@click.argument("input_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--value-column", default="value", show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def stats_iqr(ctx, input_csv, value_column, output):
    """Quartiles and IQR of a column (type-7 interpolation)."""
    cfg = resolve_config(ctx)
    values = _column_values(input_csv, value_column)
    if values.size == 0:
        raise InputError(f"{input_csv}: column {value_column!r} has no values")
    q25, q50, q75 = np.quantile(values, [0.25, 0.5, 0.75], method="linear")
    formats.write_json(
        output,
        {**formats.build_meta(cfg, [input_csv]), "n": int(values.size),
         "q25": float(q25), "median": float(q50), "q75": float(q75),
         "iqr": float(q75 - q25)},
    )
    click.echo(f"median={q50:.6g} iqr={q75 - q25:.6g}")


@stats.command("kde")
@click.argument("input_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--value-column", default="value", show_default=True)
@click.option("--grid-points", type=int, default=256, show_default=True)
@click.option("--plot/--no-plot", "do_plot", default=True, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def stats_kde(ctx, input_csv, value_column, grid_points, do_plot, output):
    """Kernel density estimate of a column, as CSV (and figure)."""
    cfg = resolve_config(ctx)
    values = _column_values(input_csv, value_column)
    grid, density = compute_kde(values, grid_points)
    formats.write_table_csv(
        output, ["x", "density"], zip(grid, density), formats.build_meta(cfg, [input_csv])
    )
    if do_plot:
        plots.plot_kde(grid, density, value_column, _figure_path(output))
    click.echo(f"wrote {output} ({grid.size} grid points)")


# ---------------------------------------------------------------------------
# temperature scaling


@main.command()
@click.argument("daily_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("temperature_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--ref", "ref_raw", required=True, help="Reference period YYYY-YYYY.")
@click.option("--fut", "fut_raw", required=True, help="Future period YYYY-YYYY.")
@click.option("-T", "--return-period", type=float, default=100.0, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def scaling(ctx, daily_csv, temperature_csv, ref_raw, fut_raw, return_period, output):
    """Percent-per-Kelvin scaling of RL_T and P99.9 between two periods."""
    cfg = resolve_config(ctx)
    ref = _parse_period(ref_raw)
    fut = _parse_period(fut_raw)
    temps = formats.read_temperature_csv(temperature_csv)
    rows = []
    errors = []
    for series in formats.read_daily_csv(daily_csv):
        key = (series.cell_id, series.member_id)
        if key not in temps:
            errors.append(
                {"item": f"{key[0]}/{key[1]}", "stage": "scaling", "kind": "input",
                 "message": "no temperature series"}
            )
            continue
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                result = percentile_scaling(
                    series, temps[key], ref, fut, return_period
                )
        except (InputError, EstimationError) as exc:
            errors.append(
                {"item": f"{key[0]}/{key[1]}", "stage": "scaling",
                 "kind": "estimation" if isinstance(exc, EstimationError) else "input",
                 "message": str(exc)}
            )
            continue
        rows.append(
            (series.cell_id, series.member_id, ref[0], ref[1], fut[0], fut[1],
             result.delta_T, result.return_period, result.delta_rl_per_K,
             result.delta_p999_per_K)
        )
    if not rows:
        raise EstimationError("no (cell, member) produced a scaling estimate")
    formats.write_table_csv(
        output,
        ["cell_id", "member_id", "ref_start", "ref_end", "fut_start", "fut_end",
         "delta_T", "return_period", "delta_rl_per_K", "delta_p999_per_K"],
        rows,
        formats.build_meta(cfg, [daily_csv, temperature_csv]),
    )
    _collect_errors(cfg, errors, output)
    click.echo(f"wrote {output} ({len(rows)} scaling rows)")


# ---------------------------------------------------------------------------
# convective-fraction bands


@main.command()
@click.argument("total_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("convective_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("grid_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--band-width", type=float, default=None, help="Latitude band width, degrees.")
@click.option("--bootstrap", "n_bootstrap", type=int, default=None,
              help="Member resamples for the bound comparison.")
@click.option("--plot/--no-plot", "do_plot", default=True, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def bands(ctx, total_csv, convective_csv, grid_csv, band_width, n_bootstrap, do_plot, output):
    """Convective fraction of extreme-day precipitation per latitude band."""
    cfg = resolve_config(ctx, band_width=band_width, bootstrap_samples=n_bootstrap)
    totals = formats.read_daily_csv(total_csv)
    convectives = formats.read_daily_csv(convective_csv)
    grid = formats.read_grid_csv(grid_csv)
    cell_lats = {cell: lat for cell, (lat, _lon) in grid.items()}
    missing = sorted({s.cell_id for s in totals} - set(cell_lats))
    if missing:
        raise InputError(f"cells not in the grid file: {missing[:5]}")
    lats = [cell_lats[s.cell_id] for s in totals]
    width = cfg.band_width
    lo0 = np.floor(min(lats) / width) * width
    edges = []
    lo = lo0
    while lo <= max(lats):
        edges.append((float(lo), float(lo + width)))
        lo += width
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = convective_fraction_bands(
            totals, convectives, edges, cell_lats,
            n_bootstrap=cfg.bootstrap_samples, seed=cfg.seed,
        )
    rows = [
        (b.band_low, b.band_high, b.n_cells, b.q25, b.q50, b.q75, b.iqr, b.p_value)
        for b in result.bands
    ]
    formats.write_table_csv(
        output,
        ["band_low", "band_high", "n_cells", "q25", "q50", "q75", "iqr", "p_value"],
        rows,
        formats.build_meta(cfg, [total_csv, convective_csv, grid_csv]),
    )
    if do_plot:
        plots.plot_bands(result, _figure_path(output))
    click.echo(f"wrote {output} ({len(rows)} bands)")


# ---------------------------------------------------------------------------
# progressive concatenation experiment


@main.command("experiment-concat")
@click.argument("spec_json", type=click.Path(exists=True, dir_okay=False))
@click.option("--subset-sizes", "sizes_raw", default=None,
              help="Comma-separated subset sizes; default 1..n_members.")
@click.option("--repeats", type=int, default=10, show_default=True)
@click.option("-T", "--return-period", type=float, default=100.0, show_default=True)
@click.option("--plot/--no-plot", "do_plot", default=True, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def experiment_concat(ctx, spec_json, sizes_raw, repeats, return_period, do_plot, output):
    """CI width versus number of concatenated members (synthetic truth)."""
    cfg = resolve_config(ctx)
    spec = SynthSpec.from_json(Path(spec_json).read_text(encoding="utf-8"))
    sizes = _parse_ints(sizes_raw) if sizes_raw else ()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        curve = concatenation_curve(
            spec, return_period, sizes, repeats, cfg.seed, cfg.confidence
        )
    rows = [
        (r.subset_size, r.repeat, r.level, r.ci_low, r.ci_high, r.width)
        for r in curve.rows
    ]
    formats.write_table_csv(
        output,
        ["subset_size", "repeat", "level", "ci_low", "ci_high", "width"],
        rows,
        formats.build_meta(cfg, [spec_json]),
    )
    if do_plot:
        plots.plot_concat_curve(curve, _figure_path(output))
    click.echo(f"wrote {output} ({len(rows)} fits)")


if __name__ == "__main__":
    main()
