"""Time-series ingestion, scaling, interpolation and hold-constant prediction."""

from __future__ import annotations

import io
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from app.core.errors import (
    ExtrapolationError,
    NonMonotoneSeriesError,
    SeriesError,
    SeriesParseError,
)

if TYPE_CHECKING:
    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

# Relative slack when checking that a window lies inside the series support
_SUPPORT_EPS = 1e-9


@dataclass(frozen=True)
class TimeSeries:
    """Samples of one exogenous quantity; ``times`` in minutes from scenario start."""

    times: NDArray[np.float64]
    values: NDArray[np.float64]
    kind: str = ""

    def __post_init__(self) -> None:
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise SeriesError("times and values must be 1-D arrays of equal length")

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @property
    def spacing(self) -> NDArray[np.float64]:
        return np.diff(self.times)


def _parse_time(raw: str) -> float | pd.Timestamp:
    try:
        return float(raw)
    except ValueError:
        stamp = pd.Timestamp(raw)
        if pd.isna(stamp):
            raise ValueError(f"not a time: {raw!r}") from None
        return stamp


def load_series(source: str | Path | io.StringIO, kind: str = "") -> TimeSeries:
    """Parse a two-column ``time,value`` CSV.

    ``time`` is either minutes from scenario start or an ISO-8601 timestamp
    (converted to minutes after the first row). A ``time,value`` header line is
    optional. Blank lines are ignored but still count for line numbers.

    Raises:
        SeriesParseError: a row is malformed; carries its 1-based line number.
        NonMonotoneSeriesError: timestamps are not strictly increasing.
    """
    label = str(source) if isinstance(source, (str, Path)) else kind
    try:
        frame = pd.read_csv(
            source,
            header=None,
            dtype=str,
            skip_blank_lines=False,
            keep_default_na=False,
            encoding="utf-8",
        )
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        line = int(match.group(1)) if match else 0
        raise SeriesParseError(line, "expected two columns (time,value)", label) from e
    except pd.errors.EmptyDataError as e:
        raise SeriesParseError(1, "no data", label) from e
    except OSError as e:
        raise SeriesError(f"{label}: cannot read series: {e}") from e

    frame = frame.fillna("")
    if frame.shape[1] > 2:
        extra = frame.iloc[:, 2:].apply(lambda col: col.str.strip() != "").any(axis=1)
        line = int(np.flatnonzero(extra.to_numpy())[0]) + 1 if extra.any() else 0
        if line:
            raise SeriesParseError(line, "expected two columns (time,value)", label)
    if frame.shape[1] < 2:
        frame[1] = ""
    frame = frame.iloc[:, :2]
    times: list[float] = []
    values: list[float] = []
    first_stamp: pd.Timestamp | None = None
    iso: bool | None = None

    for index, (raw_time, raw_value) in enumerate(frame.itertuples(index=False, name=None)):
        line = index + 1
        raw_time, raw_value = str(raw_time).strip(), str(raw_value).strip()
        if not raw_time and not raw_value:
            continue
        if not times and iso is None and raw_time.lower() == "time":
            continue
        try:
            parsed = _parse_time(raw_time)
            value = float(raw_value)
        except (ValueError, TypeError) as e:
            raise SeriesParseError(line, f"cannot parse {raw_time!r},{raw_value!r}", label) from e

        row_is_iso = isinstance(parsed, pd.Timestamp)
        if iso is None:
            iso = row_is_iso
        elif iso != row_is_iso:
            raise SeriesParseError(line, "mixes ISO-8601 and minute offsets", label)

        if isinstance(parsed, pd.Timestamp):
            if first_stamp is None:
                first_stamp = parsed
            try:
                minutes = (parsed - first_stamp).total_seconds() / 60.0
            except TypeError as e:
                raise SeriesParseError(line, "inconsistent time zones", label) from e
        else:
            minutes = parsed
        if not (math.isfinite(minutes) and math.isfinite(value)):
            raise SeriesParseError(line, "non-finite entry", label)
        if times and minutes <= times[-1]:
            raise NonMonotoneSeriesError(line, label)
        times.append(minutes)
        values.append(value)

    if not times:
        raise SeriesParseError(1, "no data rows", label)

    logger.debug("Loaded %d samples of %s from %s", len(times), kind or "series", label)
    return TimeSeries(np.asarray(times, dtype=float), np.asarray(values, dtype=float), kind)


def rescale(series: TimeSeries, factor: float) -> TimeSeries:
    if not math.isfinite(factor):
        raise SeriesError(f"scale factor must be finite, got {factor!r}")
    return TimeSeries(series.times.copy(), series.values * factor, series.kind)


def uniform_grid(start_min: float, end_min: float, step_min: float) -> NDArray[np.float64]:
    count = int(math.floor((end_min - start_min) / step_min + 1e-9)) + 1
    return start_min + step_min * np.arange(count, dtype=float)


def interpolate_to_grid(
    series: TimeSeries,
    step_s: float = 30.0,
    start_min: float | None = None,
    end_min: float | None = None,
) -> TimeSeries:
    """Piecewise-linear resampling onto a uniform grid.

    Raises:
        ExtrapolationError: the window is not covered by the series.
    """
    if len(series) < 2:
        raise ExtrapolationError(f"series {series.kind!r} needs at least two points")
    start = series.start if start_min is None else start_min
    end = series.end if end_min is None else end_min
    slack = _SUPPORT_EPS * max(1.0, abs(series.end))
    if start < series.start - slack or end > series.end + slack:
        raise ExtrapolationError(
            f"series {series.kind!r} covers [{series.start}, {series.end}] min, "
            f"window [{start}, {end}] min requested"
        )
    grid = uniform_grid(start, end, step_s / 60.0)
    return TimeSeries(grid, np.interp(grid, series.times, series.values), series.kind)


def predict(
    series: TimeSeries, t_now_min: float, horizon_min: float, step_s: float = 30.0
) -> NDArray[np.float64]:
    """Hold the value at ``t_now`` constant over ``[t_now, t_now + horizon)``."""
    count = round(horizon_min * 60.0 / step_s)
    if count <= 0:
        return np.empty(0, dtype=float)
    return np.full(count, value_at(series, t_now_min), dtype=float)


def value_at(series: TimeSeries, t_min: float) -> float:
    """Value of a gridded series at a grid time."""
    index = int(np.searchsorted(series.times, t_min - 1e-9))
    if index >= len(series) or abs(series.times[index] - t_min) > 1e-6:
        if t_min < series.start or t_min > series.end:
            raise ExtrapolationError(
                f"t={t_min} min outside series {series.kind!r} [{series.start}, {series.end}]"
            )
        raise SeriesError(f"t={t_min} min is not on the grid of series {series.kind!r}")
    return float(series.values[index])


def bulk_fluxes(
    air_temperature_c: NDArray[np.float64],
    wind_speed_ms: NDArray[np.float64],
    snow_temperature_c: float,
    sensible_coeff: float,
    latent_coeff: float,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Bulk-transfer sensible and latent flux estimates in W/m²."""
    sensible = sensible_coeff * wind_speed_ms * (air_temperature_c - snow_temperature_c)
    latent = latent_coeff * wind_speed_ms
    return sensible, latent
