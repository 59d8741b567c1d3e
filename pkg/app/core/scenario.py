"""Scenario container: validated parameters plus gridded exogenous series."""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING

import numpy as np

from app.config.schema import REQUIRED_SERIES, ScenarioSchema
from app.core.errors import ConfigError, SeriesError
from app.core.series import (
    TimeSeries,
    bulk_fluxes,
    interpolate_to_grid,
    load_series,
    predict,
    rescale,
    uniform_grid,
)

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from app.config.schema import ControllerParams, GridParams, NumericsParams, ThermalParams
    from app.config.settings import ScenarioSettings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeriesSample:
    """Exogenous values at one instant."""

    residential_load: float = 0.0
    pv_generation: float = 0.0
    solar_flux: float = 0.0
    sensible_flux: float = 0.0
    latent_flux: float = 0.0
    snowfall: float = 0.0
    air_temperature: float = 0.0
    wind_speed: float = 0.0

    @property
    def mu1(self) -> float:
        return self.solar_flux + self.sensible_flux + self.latent_flux


_FIELDS = tuple(f.name for f in fields(SeriesSample))


@dataclass(frozen=True)
class ExogenousSeries:
    """All exogenous series on one uniform grid (minutes)."""

    times: NDArray[np.float64]
    residential_load: NDArray[np.float64]
    pv_generation: NDArray[np.float64]
    solar_flux: NDArray[np.float64]
    sensible_flux: NDArray[np.float64]
    latent_flux: NDArray[np.float64]
    snowfall: NDArray[np.float64]
    air_temperature: NDArray[np.float64]
    wind_speed: NDArray[np.float64]

    def __post_init__(self) -> None:
        n = self.times.size
        for name in _FIELDS:
            if getattr(self, name).shape != (n,):
                raise SeriesError(f"series {name!r} does not match the time grid")
        if np.any(self.pv_generation < 0):
            raise ConfigError("pv_generation must be >= 0 after scaling")
        if np.any(self.residential_load > 0):
            raise ConfigError("residential_load must be <= 0 after scaling (consumption)")
        if np.any(self.snowfall < 0):
            raise ConfigError("snowfall must be >= 0")

    @classmethod
    def constant(
        cls, duration_min: float, step_s: float = 30.0, **values: float
    ) -> ExogenousSeries:
        """Flat series, mainly for tests and synthetic studies."""
        times = uniform_grid(0.0, duration_min, step_s / 60.0)
        arrays = {name: np.full(times.size, float(values.get(name, 0.0))) for name in _FIELDS}
        return cls(times=times, **arrays)

    @property
    def step_min(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.5

    def _index(self, t_min: float) -> int:
        index = int(round(t_min / self.step_min))
        if index < 0 or index >= self.times.size or abs(self.times[index] - t_min) > 1e-6:
            raise SeriesError(f"t={t_min} min is not on the scenario grid")
        return index

    def sample_at(self, t_min: float) -> SeriesSample:
        i = self._index(t_min)
        return SeriesSample(**{name: float(getattr(self, name)[i]) for name in _FIELDS})

    def series(self, name: str) -> TimeSeries:
        return TimeSeries(self.times, getattr(self, name), name)

    def forecast(self, t_now_min: float, horizon_min: float) -> list[SeriesSample]:
        """Hold-constant forecast sampled on the simulation step."""
        step_s = self.step_min * 60.0
        columns = {
            name: predict(self.series(name), t_now_min, horizon_min, step_s) for name in _FIELDS
        }
        count = len(columns[_FIELDS[0]])
        return [
            SeriesSample(**{name: float(columns[name][k]) for name in _FIELDS})
            for k in range(count)
        ]


@dataclass(frozen=True)
class Scenario:
    schema: ScenarioSchema
    series: ExogenousSeries

    @property
    def name(self) -> str:
        return self.schema.name

    @property
    def grid(self) -> GridParams:
        return self.schema.grid

    @property
    def thermal(self) -> ThermalParams:
        return self.schema.thermal

    @property
    def controller(self) -> ControllerParams:
        return self.schema.controller

    @property
    def numerics(self) -> NumericsParams:
        return self.schema.numerics

    @property
    def duration_min(self) -> float:
        return self.schema.duration_min

    def with_schema(self, **updates: object) -> Scenario:
        return Scenario(self.schema.model_copy(update=updates), self.series)

    def without_battery(self) -> Scenario:
        """Battery pinned: capacity = floor = initial energy."""
        ctrl = self.controller
        pinned = ctrl.model_copy(
            update={
                "battery_floor_puh": ctrl.battery_initial_puh,
                "battery_capacity_puh": ctrl.battery_initial_puh,
            }
        )
        return self.with_schema(controller=pinned, name=f"{self.name}_no_battery")


def load_scenario(settings: ScenarioSettings) -> Scenario:
    """Read, scale and grid every series named by a scenario config."""
    schema = settings.schema
    missing = [kind for kind in REQUIRED_SERIES if kind not in schema.series]
    if missing:
        raise ConfigError(f"missing series: {', '.join(missing)}", settings.config_path)

    step_s = schema.numerics.step_s
    arrays: dict[str, NDArray[np.float64]] = {}
    times: NDArray[np.float64] | None = None
    for kind, source in sorted(schema.series.items()):
        raw = load_series(settings.resolve_path(source.path), kind)
        gridded = interpolate_to_grid(rescale(raw, source.scale), step_s, 0.0, schema.duration_min)
        arrays[kind] = gridded.values
        times = gridded.times
        logger.debug("Series %s: %d raw samples -> %d grid points", kind, len(raw), len(gridded))

    assert times is not None
    if "sensible_flux" not in arrays or "latent_flux" not in arrays:
        sensible, latent = bulk_fluxes(
            arrays["air_temperature"],
            arrays["wind_speed"],
            schema.thermal.snow_temperature_c,
            schema.flux.sensible_coeff,
            schema.flux.latent_coeff,
        )
        arrays.setdefault("sensible_flux", sensible)
        arrays.setdefault("latent_flux", latent)

    series = ExogenousSeries(times=times, **arrays)
    logger.info(
        "Loaded scenario %s: %.1f min on %d grid points",
        schema.name,
        schema.duration_min,
        times.size,
    )
    return Scenario(schema, series)
