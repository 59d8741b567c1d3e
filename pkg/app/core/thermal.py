"""Cable-surface temperature, vertical soil columns and snow depth."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from app.core.errors import ConfigError

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from app.config.schema import ThermalParams
    from app.core.scenario import SeriesSample

logger = logging.getLogger(__name__)

# Length-density factor applied to the cable loss before it enters the surface balance
CABLE_LOSS_FACTOR = 1e-2


@dataclass(frozen=True)
class ThermalState:
    """Thermal and snow state at every cable node.

    ``soil`` columns run from the ground surface (index 0, snow side) down to
    the cable burial depth (last index).
    """

    surf_offset: NDArray[np.float64]
    soil: NDArray[np.float64]
    snow: NDArray[np.float64]
    depth_grid: NDArray[np.float64]

    @classmethod
    def initial(cls, params: ThermalParams, positions: int, depth_nodes: int) -> ThermalState:
        return cls(
            surf_offset=np.zeros(positions),
            soil=np.full((positions, depth_nodes), params.initial_soil_c),
            snow=np.full(positions, params.initial_snow_mm),
            depth_grid=np.linspace(0.0, params.burial_depth_m, depth_nodes),
        )

    @property
    def depth_cm(self) -> NDArray[np.float64]:
        return self.depth_grid * 100.0

    @property
    def surface_temperature(self) -> NDArray[np.float64]:
        """Reported cable-surface temperature: offset plus soil temperature at the cable."""
        return self.surf_offset + self.soil[:, -1]


@dataclass(frozen=True)
class MeltFluxes:
    mu1: NDArray[np.float64]
    mu2: NDArray[np.float64]

    @property
    def total(self) -> NDArray[np.float64]:
        return self.mu1 + self.mu2


def steady_surface_offset(
    gamma_w_per_m: float | NDArray[np.float64], params: ThermalParams
) -> float | NDArray[np.float64]:
    """Long-run offset under constant cable loss (W/m)."""
    return (gamma_w_per_m * CABLE_LOSS_FACTOR - params.radiative_cooling_w_per_cm) / (
        params.cable_contact_coeff_w_per_m_k
    )


def step_cable_surface(
    state: ThermalState,
    gamma_w_per_m: NDArray[np.float64],
    params: ThermalParams,
    dt_s: float,
) -> NDArray[np.float64]:
    """Advance the surface offset with the exact solution of its linear ODE.

    ``C d(delta)/dt = Gamma * 1e-2 - q_r - gamma * delta`` has a closed-form step,
    stable for any ``dt`` and with no time-discretisation error.
    """
    if dt_s <= 0:
        raise ValueError(f"dt must be > 0, got {dt_s!r}")
    target = steady_surface_offset(gamma_w_per_m, params)
    decay = math.exp(
        -params.cable_contact_coeff_w_per_m_k * dt_s / params.cable_heat_capacity_j_per_cm_c
    )
    return np.asarray(target + (state.surf_offset - target) * decay)


def _soil_matrix(
    params: ThermalParams, depth_grid: NDArray[np.float64], dt_s: float
) -> tuple[NDArray[np.float64], float, float]:
    n = depth_grid.size
    dy = float(depth_grid[1] - depth_grid[0])
    r = params.soil_diffusivity_m2_per_s * dt_s / (dy * dy)
    kappa_g = dy * params.ground_snow_transfer_w_per_m2_k / params.soil_conductivity_w_per_m_k
    kappa_c = dy * params.cable_soil_transfer_w_per_m2_k / params.soil_conductivity_w_per_m_k

    ab = np.zeros((3, n))
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :-1] = -r
    # ghost nodes fold the Robin conditions into the end rows
    ab[0, 1] = -2.0 * r
    ab[2, n - 2] = -2.0 * r
    ab[1, 0] += 2.0 * r * kappa_g
    ab[1, n - 1] += 2.0 * r * kappa_c
    return ab, 2.0 * r * kappa_g, 2.0 * r * kappa_c


def step_soil(
    soil: NDArray[np.float64],
    surface_temperature: NDArray[np.float64],
    params: ThermalParams,
    depth_grid: NDArray[np.float64],
    dt_s: float,
) -> NDArray[np.float64]:
    """Backward-Euler step of every soil column at once.

    Both ends carry Robin conditions: the snow bath at the ground surface
    (``beta_ground``, ``delta_snow``) and the cable bath at the burial depth
    (``beta_cable``, ``surface_temperature``). All columns share one banded
    matrix, so a single multi-right-hand-side solve advances them together.

    Raises:
        ConfigError: the tridiagonal system is singular.
    """
    if dt_s <= 0:
        raise ValueError(f"dt must be > 0, got {dt_s!r}")
    ab, snow_gain, cable_gain = _soil_matrix(params, depth_grid, dt_s)
    rhs = np.array(soil, dtype=float).T
    rhs[0] += snow_gain * params.snow_temperature_c
    rhs[-1] += cable_gain * np.asarray(surface_temperature, dtype=float)
    try:
        solved = solve_banded((1, 1), ab, rhs, check_finite=False)
    except (LinAlgError, ValueError) as e:
        raise ConfigError(f"soil conduction system is singular: {e}") from e
    return np.asarray(solved.T)


def step_soil_column(
    state: ThermalState,
    index: int,
    params: ThermalParams,
    dt_s: float,
    surface_temperature: float | None = None,
) -> NDArray[np.float64]:
    """Advance the single soil column under cable node ``index``."""
    surface = (
        float(state.surface_temperature[index])
        if surface_temperature is None
        else surface_temperature
    )
    column = state.soil[index : index + 1]
    return step_soil(column, np.array([surface]), params, state.depth_grid, dt_s)[0]


def melt_fluxes(state: ThermalState, sample: SeriesSample, params: ThermalParams) -> MeltFluxes:
    mu1 = np.full(state.snow.shape, sample.mu1)
    mu2 = params.ground_snow_transfer_w_per_m2_k * (state.soil[:, 0] - params.snow_temperature_c)
    return MeltFluxes(mu1=mu1, mu2=mu2)


def step_snow(
    snow: NDArray[np.float64],
    fluxes: MeltFluxes,
    f_snow: float | NDArray[np.float64],
    params: ThermalParams,
    dt_min: float,
) -> NDArray[np.float64]:
    """Explicit snow-depth update, clamped at zero.

    Melting acts only where snow is present and only for a positive net flux;
    snowfall accumulates everywhere.
    """
    if dt_min <= 0:
        raise ValueError(f"dt must be > 0, got {dt_min!r}")
    melt = params.melt_rate_per_flux * np.maximum(fluxes.total, 0.0) * dt_min
    melt = np.where(snow > 0.0, melt, 0.0)
    return np.maximum(snow - melt + np.asarray(f_snow) * dt_min, 0.0)


def advance_thermal(
    state: ThermalState,
    gamma_w_per_m: NDArray[np.float64],
    sample: SeriesSample,
    params: ThermalParams,
    dt_s: float,
) -> ThermalState:
    """One coupled step: cable surface, soil columns, then snow."""
    offset = step_cable_surface(state, gamma_w_per_m, params, dt_s)
    # the cable bath uses the soil temperature at the cable from the previous step
    surface = offset + state.soil[:, -1]
    soil = step_soil(state.soil, surface, params, state.depth_grid, dt_s)
    stepped = replace(state, surf_offset=offset, soil=soil)
    fluxes = melt_fluxes(stepped, sample, params)
    snow = step_snow(state.snow, fluxes, sample.snowfall, params, dt_s / 60.0)
    return replace(stepped, snow=snow)
