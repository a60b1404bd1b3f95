"""File formats: CSV ingestion contracts, JSON artifacts and provenance.

Bit-exact CSV contracts (UTF-8, LF line endings, ISO-8601 dates):

    daily series   cell_id,member_id,date,value
    grid           cell_id,lat,lon
    region mask    cell_id,region
    maxima         cell_id,member_id,duration_days,year,maximum
    temperature    cell_id,member_id,year,temperature

Writers emit floats in their shortest round-trip decimal form and rows in
canonical key order, so identical inputs always reproduce identical bytes.
Lines starting with '#' carry provenance (tool version, resolved config,
input digests) and are skipped by every reader.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import InputError
from .gev import GevFit, GevParams, KsResult
from .maxima import BlockMaximaSeries, DailySeries
from .qmap import QuantileMap

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")

DAILY_HEADER = ["cell_id", "member_id", "date", "value"]
GRID_HEADER = ["cell_id", "lat", "lon"]
MASK_HEADER = ["cell_id", "region"]
MAXIMA_HEADER = ["cell_id", "member_id", "duration_days", "year", "maximum"]
TEMPERATURE_HEADER = ["cell_id", "member_id", "year", "temperature"]


def fmt_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(x))


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_meta(config: RunConfig, inputs: Sequence[str | Path]) -> dict:
    """Provenance block embedded in every output artifact."""
    return {
        "version": __version__,
        "config": config.to_dict(),
        "inputs": {Path(p).name: sha256_file(p) for p in sorted(map(str, inputs))},
    }


def _meta_lines(meta: dict | None) -> list[str]:
    if meta is None:
        return []
    return ["# provenance: " + json.dumps(meta, sort_keys=True, separators=(",", ":"))]


def _open_rows(path: str | Path, expected_header: list[str]):
    """Yield (row_number, row) pairs after validating the header."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: cannot read: {exc}") from exc
    lines = text.splitlines()
    data_lines = [(i + 1, line) for i, line in enumerate(lines) if not line.startswith("#")]
    if not data_lines:
        raise InputError(f"{path}: empty file (row 0): expected header "
                         f"{','.join(expected_header)}")
    header_no, header_line = data_lines[0]
    header = next(csv.reader([header_line]))
    if header != expected_header:
        raise InputError(
            f"{path}: bad header at row {header_no}: got {header_line!r}, "
            f"expected {','.join(expected_header)!r}"
        )
    if len(data_lines) == 1:
        raise InputError(f"{path}: no data rows after the header (row {header_no})")
    for row_no, line in data_lines[1:]:
        row = next(csv.reader([line]))
        if len(row) != len(expected_header):
            raise InputError(
                f"{path}: row {row_no}: expected {len(expected_header)} fields, "
                f"got {len(row)}"
            )
        yield row_no, row


def _parse_float(path, row_no: int, name: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise InputError(f"{path}: row {row_no}: bad {name} {raw!r}") from exc
    if not np.isfinite(value):
        raise InputError(f"{path}: row {row_no}: non-finite {name} {raw!r}")
    return value


def _parse_int(path, row_no: int, name: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise InputError(f"{path}: row {row_no}: bad {name} {raw!r}") from exc


def _parse_date(path, row_no: int, raw: str) -> str:
    if not _DATE_RE.match(raw):
        raise InputError(f"{path}: row {row_no}: date {raw!r} is not YYYY-MM-DD")
    try:
        np.datetime64(raw, "D")
    except ValueError as exc:
        raise InputError(f"{path}: row {row_no}: invalid date {raw!r}") from exc
    return raw


def read_daily_csv(path: str | Path) -> list[DailySeries]:
    """Daily series grouped by (cell_id, member_id), sorted by key."""
    groups: dict[tuple[str, str], list[tuple[str, float]]] = {}
    for row_no, row in _open_rows(path, DAILY_HEADER):
        cell, member, date_s, value_s = row
        date = _parse_date(path, row_no, date_s)
        value = _parse_float(path, row_no, "value", value_s)
        if value < 0:
            raise InputError(f"{path}: row {row_no}: negative depth {value_s!r}")
        groups.setdefault((cell, member), []).append((date, value))
    out = []
    for (cell, member), rows in sorted(groups.items()):
        rows.sort(key=lambda r: r[0])
        dates = np.array([r[0] for r in rows], dtype="datetime64[D]")
        if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise InputError(f"{path}: duplicate date for cell {cell!r} member {member!r}")
        out.append(
            DailySeries(
                cell_id=cell,
                member_id=member,
                dates=dates,
                values=np.array([r[1] for r in rows], dtype=float),
            )
        )
    return out


def write_daily_csv(
    path: str | Path, series_list: Sequence[DailySeries], meta: dict | None = None
) -> None:
    lines = _meta_lines(meta) + [",".join(DAILY_HEADER)]
    for series in sorted(series_list, key=lambda s: (s.cell_id, s.member_id)):
        for date, value in zip(series.dates, series.values):
            lines.append(f"{series.cell_id},{series.member_id},{date},{fmt_float(value)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_maxima_csv(path: str | Path) -> list[BlockMaximaSeries]:
    """Maxima grouped per (cell_id, duration_days); members stay together."""
    groups: dict[tuple[str, int], list[tuple[str, int, float]]] = {}
    for row_no, row in _open_rows(path, MAXIMA_HEADER):
        cell, member, dur_s, year_s, max_s = row
        duration = _parse_int(path, row_no, "duration_days", dur_s)
        year = _parse_int(path, row_no, "year", year_s)
        maximum = _parse_float(path, row_no, "maximum", max_s)
        groups.setdefault((cell, duration), []).append((member, year, maximum))
    out = []
    for (cell, duration), rows in sorted(groups.items()):
        rows.sort(key=lambda r: (r[0], r[1]))
        try:
            out.append(
                BlockMaximaSeries(
                    cell_id=cell,
                    duration_days=duration,
                    member_ids=np.array([r[0] for r in rows], dtype=object),
                    years=np.array([r[1] for r in rows], dtype=np.int64),
                    maxima=np.array([r[2] for r in rows], dtype=float),
                )
            )
        except InputError as exc:
            raise InputError(f"{path}: cell {cell!r} duration {duration}: {exc}") from exc
    return out


def write_maxima_csv(
    path: str | Path, series_list: Sequence[BlockMaximaSeries], meta: dict | None = None
) -> None:
    lines = _meta_lines(meta) + [",".join(MAXIMA_HEADER)]
    rows = []
    for s in series_list:
        for member, year, value in zip(s.member_ids, s.years, s.maxima):
            rows.append((s.cell_id, str(member), s.duration_days, int(year), value))
    rows.sort(key=lambda r: (r[0], r[2], r[1], r[3]))
    for cell, member, duration, year, value in rows:
        lines.append(f"{cell},{member},{duration},{year},{fmt_float(value)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_grid_csv(path: str | Path) -> dict[str, tuple[float, float]]:
    grid: dict[str, tuple[float, float]] = {}
    for row_no, row in _open_rows(path, GRID_HEADER):
        cell, lat_s, lon_s = row
        if cell in grid:
            raise InputError(f"{path}: row {row_no}: duplicate cell {cell!r}")
        grid[cell] = (
            _parse_float(path, row_no, "lat", lat_s),
            _parse_float(path, row_no, "lon", lon_s),
        )
    return grid


def write_grid_csv(
    path: str | Path, grid: Mapping[str, tuple[float, float]], meta: dict | None = None
) -> None:
    lines = _meta_lines(meta) + [",".join(GRID_HEADER)]
    for cell in sorted(grid):
        lat, lon = grid[cell]
        lines.append(f"{cell},{fmt_float(lat)},{fmt_float(lon)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_mask_csv(path: str | Path) -> dict[str, str]:
    mask: dict[str, str] = {}
    for row_no, row in _open_rows(path, MASK_HEADER):
        cell, region = row
        if cell in mask:
            raise InputError(f"{path}: row {row_no}: duplicate cell {cell!r}")
        if region == "CONUS":
            raise InputError(f"{path}: row {row_no}: 'CONUS' is reserved for the union")
        mask[cell] = region
    return mask


def write_mask_csv(path: str | Path, mask: Mapping[str, str], meta: dict | None = None) -> None:
    lines = _meta_lines(meta) + [",".join(MASK_HEADER)]
    for cell in sorted(mask):
        lines.append(f"{cell},{mask[cell]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_temperature_csv(path: str | Path) -> dict[tuple[str, str], dict[int, float]]:
    temps: dict[tuple[str, str], dict[int, float]] = {}
    for row_no, row in _open_rows(path, TEMPERATURE_HEADER):
        cell, member, year_s, value_s = row
        year = _parse_int(path, row_no, "year", year_s)
        per = temps.setdefault((cell, member), {})
        if year in per:
            raise InputError(f"{path}: row {row_no}: duplicate year {year}")
        per[year] = _parse_float(path, row_no, "temperature", value_s)
    return temps


def write_temperature_csv(
    path: str | Path,
    temps: Mapping[tuple[str, str], Mapping[int, float]],
    meta: dict | None = None,
) -> None:
    lines = _meta_lines(meta) + [",".join(TEMPERATURE_HEADER)]
    for (cell, member) in sorted(temps):
        for year in sorted(temps[(cell, member)]):
            lines.append(f"{cell},{member},{year},{fmt_float(temps[(cell, member)][year])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_table_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence],
    meta: dict | None = None,
) -> None:
    """Generic delimited report: floats in round-trip form, ints plain."""
    lines = _meta_lines(meta) + [",".join(header)]
    for row in rows:
        cells = []
        for value in row:
            if isinstance(value, float):
                cells.append(fmt_float(value))
            elif isinstance(value, (int, np.integer)):
                cells.append(str(int(value)))
            else:
                cells.append(str(value))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


@dataclass(frozen=True, eq=False)
class FitRecord:
    """One fitted (cell, duration[, member]) unit inside a fit artifact."""

    cell_id: str
    duration_days: int
    member_id: str | None
    fit: GevFit
    ks: KsResult


def write_fit_json(
    path: str | Path, records: Sequence[FitRecord], mode: str, meta: dict
) -> None:
    payload = {
        **meta,
        "mode": mode,
        "fits": [
            {
                "cell_id": r.cell_id,
                "duration_days": r.duration_days,
                "member_id": r.member_id,
                "params": {
                    "location": r.fit.params.location,
                    "scale": r.fit.params.scale,
                    "shape": r.fit.params.shape,
                },
                "covariance": [float(v) for v in r.fit.covariance.reshape(-1)],
                "log_likelihood": r.fit.log_likelihood,
                "n_samples": r.fit.n_samples,
                "converged": r.fit.converged,
                "n_iterations": r.fit.n_iterations,
                "ks": {
                    "statistic": r.ks.statistic,
                    "p_value": r.ks.p_value,
                    "passed": r.ks.passed,
                    "alpha": r.ks.alpha,
                },
            }
            for r in sorted(
                records, key=lambda r: (r.cell_id, r.duration_days, r.member_id or "")
            )
        ],
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8", newline="\n"
    )


def read_fit_json(path: str | Path) -> tuple[list[FitRecord], dict]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"{path}: cannot read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON: {exc}") from exc
    records = []
    try:
        for item in payload["fits"]:
            params = GevParams(**item["params"])
            ks = item["ks"]
            records.append(
                FitRecord(
                    cell_id=item["cell_id"],
                    duration_days=int(item["duration_days"]),
                    member_id=item["member_id"],
                    fit=GevFit(
                        params=params,
                        covariance=np.array(item["covariance"], dtype=float).reshape(3, 3),
                        log_likelihood=float(item["log_likelihood"]),
                        n_samples=int(item["n_samples"]),
                        converged=bool(item["converged"]),
                        n_iterations=int(item["n_iterations"]),
                    ),
                    ks=KsResult(
                        statistic=float(ks["statistic"]),
                        p_value=float(ks["p_value"]),
                        passed=bool(ks["passed"]),
                        alpha=float(ks["alpha"]),
                    ),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed fit artifact: {exc}") from exc
    return records, payload


def write_qmap_json(path: str | Path, maps: Sequence[QuantileMap], meta: dict) -> None:
    payload = {
        **meta,
        "maps": [
            {
                "cell_id": m.cell_id,
                "probs": [float(p) for p in m.probs],
                "model_quantiles": [float(q) for q in m.model_quantiles],
                "obs_quantiles": [float(q) for q in m.obs_quantiles],
                "train_start": str(m.train_start),
                "train_end": str(m.train_end),
            }
            for m in sorted(maps, key=lambda m: m.cell_id)
        ],
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8", newline="\n"
    )


def read_qmap_json(path: str | Path) -> list[QuantileMap]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"{path}: cannot read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON: {exc}") from exc
    try:
        return [
            QuantileMap(
                cell_id=item["cell_id"],
                probs=np.array(item["probs"], dtype=float),
                model_quantiles=np.array(item["model_quantiles"], dtype=float),
                obs_quantiles=np.array(item["obs_quantiles"], dtype=float),
                train_start=np.datetime64(item["train_start"], "D"),
                train_end=np.datetime64(item["train_end"], "D"),
            )
            for item in payload["maps"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed quantile-map artifact: {exc}") from exc


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8", newline="\n"
    )


def write_errors_sidecar(out_path: str | Path, errors: Sequence[dict]) -> Path | None:
    """Write <out>.errors.json listing partial failures; None when clean."""
    if not errors:
        return None
    sidecar = Path(str(out_path) + ".errors.json")
    write_json(sidecar, {"errors": sorted(errors, key=lambda e: sorted(e.items()))})
    return sidecar
