"""Pydantic schema for scenario configuration files.

Every key carries its unit in the name. Defaults reproduce the reference
parameter set (base values, per-unit conductor constants, thermal and snow
constants, evaluation weights).
"""

from __future__ import annotations

import math
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

SERIES_KINDS = (
    "residential_load",
    "pv_generation",
    "solar_flux",
    "sensible_flux",
    "latent_flux",
    "snowfall",
    "air_temperature",
    "wind_speed",
)

REQUIRED_SERIES = (
    "residential_load",
    "pv_generation",
    "solar_flux",
    "snowfall",
    "air_temperature",
    "wind_speed",
)


def _positive(info: ValidationInfo, v: float) -> float:
    if not math.isfinite(v) or v <= 0:
        raise ValueError(f"Invalid value for '{info.field_name}': {v!r}. Must be > 0")
    return v


def _non_negative(info: ValidationInfo, v: float) -> float:
    if not math.isfinite(v) or v < 0:
        raise ValueError(f"Invalid value for '{info.field_name}': {v!r}. Must be >= 0")
    return v


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class GridParams(_Frozen):
    base_apparent_power_va: float = 10_000.0
    line_length_m: float = 100.0
    ref_phase_rad: float = 0.0
    ref_amplitude_v: float = 6600.0 / math.sqrt(3.0)
    transformer_ratio: float = 33.0 / math.sqrt(3.0)
    base_conductance_m_per_ohm: float = 918.0
    base_susceptance_m_per_ohm: float = 918.0
    line_conductance_pu: float = 1.0
    line_susceptance_pu: float = 1.0
    cable_conductance_pu: float = 0.5
    cable_susceptance_pu: float = 0.5
    line_admittance_scale: float = 10.0
    cable_admittance_scale: float = 100.0
    cable_load_power_pu: float = -10.0
    load_position_m: float = 25.0
    pv_position_m: float = 50.0
    battery_position_m: float = 75.0

    @field_validator(
        "base_apparent_power_va",
        "line_length_m",
        "ref_amplitude_v",
        "transformer_ratio",
        "base_conductance_m_per_ohm",
        "base_susceptance_m_per_ohm",
        "line_conductance_pu",
        "line_susceptance_pu",
        "cable_conductance_pu",
        "cable_susceptance_pu",
        "line_admittance_scale",
        "cable_admittance_scale",
    )
    @classmethod
    def validate_positive(cls, v: float, info: ValidationInfo) -> float:
        return _positive(info, v)

    @field_validator("cable_load_power_pu")
    @classmethod
    def validate_cable_load(cls, v: float) -> float:
        if not math.isfinite(v) or v > 0:
            raise ValueError(f"Invalid value for 'cable_load_power_pu': {v!r}. Must be <= 0")
        return v

    @model_validator(mode="after")
    def validate_positions(self) -> GridParams:
        for key in ("load_position_m", "pv_position_m", "battery_position_m"):
            value = getattr(self, key)
            if not 0.0 <= value <= self.line_length_m:
                raise ValueError(
                    f"Invalid value for '{key}': {value!r}. "
                    f"Must lie within [0, {self.line_length_m}]"
                )
        return self

    @property
    def cable_ref_amplitude_v(self) -> float:
        return self.ref_amplitude_v / self.transformer_ratio

    @property
    def line_admittance(self) -> tuple[float, float]:
        s = self.line_admittance_scale
        return self.line_conductance_pu * s, self.line_susceptance_pu * s

    @property
    def cable_admittance(self) -> tuple[float, float]:
        s = self.cable_admittance_scale
        return self.cable_conductance_pu * s, self.cable_susceptance_pu * s

    def position_pu(self, position_m: float) -> float:
        return position_m / self.line_length_m

    @property
    def w_per_m(self) -> float:
        """Watts per metre represented by one p.u. loss density."""
        return self.base_apparent_power_va / self.line_length_m


class ThermalParams(_Frozen):
    radiative_cooling_w_per_cm: float = 0.0
    cable_contact_coeff_w_per_m_k: float = 1.04
    cable_heat_capacity_j_per_cm_c: float = 18.0
    soil_conductivity_w_per_m_k: float = 0.5
    cable_soil_transfer_w_per_m2_k: float = 300.0
    burial_depth_cm: float = 10.0
    soil_diffusivity_m2_per_s: float = 0.008
    ground_snow_transfer_w_per_m2_k: float = 88.0
    snow_temperature_c: float = 0.0
    snow_density_g_per_cm3: float = 0.06
    snow_unit_conversion: float = 1.792e-4
    initial_snow_mm: float = 30.0
    initial_soil_c: float = 0.0

    @field_validator(
        "cable_contact_coeff_w_per_m_k",
        "cable_heat_capacity_j_per_cm_c",
        "soil_conductivity_w_per_m_k",
        "cable_soil_transfer_w_per_m2_k",
        "burial_depth_cm",
        "soil_diffusivity_m2_per_s",
        "ground_snow_transfer_w_per_m2_k",
        "snow_density_g_per_cm3",
        "snow_unit_conversion",
    )
    @classmethod
    def validate_positive(cls, v: float, info: ValidationInfo) -> float:
        return _positive(info, v)

    @field_validator("initial_snow_mm", "radiative_cooling_w_per_cm")
    @classmethod
    def validate_non_negative(cls, v: float, info: ValidationInfo) -> float:
        return _non_negative(info, v)

    @property
    def burial_depth_m(self) -> float:
        return self.burial_depth_cm / 100.0

    @property
    def melt_rate_per_flux(self) -> float:
        """Snow depth melted per minute by 1 W/m², in mm/min."""
        return self.snow_unit_conversion / self.snow_density_g_per_cm3


class WeightsSchema(_Frozen):
    w_loss: float = 4e2
    w_fluc: float = 1e7
    w_snow: float = 1.2e5
    w_cost: float = 8e5
    w_pvfluc: float = 1.0
    w_stor1: float = 1e-3
    w_batteryfluc: float = 1.0
    w_stor2: float = 1e-3

    @field_validator("*")
    @classmethod
    def validate_weight(cls, v: float, info: ValidationInfo) -> float:
        return _non_negative(info, v)

    def scaled(self, factor: float) -> WeightsSchema:
        """Return a copy with the four J weights multiplied by ``factor``."""
        return self.model_copy(
            update={
                "w_loss": self.w_loss * factor,
                "w_fluc": self.w_fluc * factor,
                "w_snow": self.w_snow * factor,
                "w_cost": self.w_cost * factor,
            }
        )


class ControllerParams(_Frozen):
    t_mini_min: float = 10.0
    t_pred_min: float = 30.0
    weights: WeightsSchema = Field(default_factory=WeightsSchema)
    battery_initial_puh: float = 10.0
    battery_floor_puh: float = 2.0
    battery_capacity_puh: float = 20.0
    zeta_guard_puh: float = 0.1
    battery_line_rate_pu: float = 10.0
    pv_battery_factor: float = 3.0
    stage_a_pv_dest: int = 1

    @field_validator("t_mini_min", "t_pred_min", "zeta_guard_puh", "pv_battery_factor")
    @classmethod
    def validate_positive(cls, v: float, info: ValidationInfo) -> float:
        return _positive(info, v)

    @field_validator(
        "battery_initial_puh", "battery_floor_puh", "battery_capacity_puh", "battery_line_rate_pu"
    )
    @classmethod
    def validate_non_negative(cls, v: float, info: ValidationInfo) -> float:
        return _non_negative(info, v)

    @field_validator("stage_a_pv_dest")
    @classmethod
    def validate_pv_dest(cls, v: int) -> int:
        if v not in (0, 1):
            raise ValueError(f"Invalid value for 'stage_a_pv_dest': {v!r}. Must be one of: 0, 1")
        return v

    @model_validator(mode="after")
    def validate_horizon_and_battery(self) -> ControllerParams:
        ratio = self.t_pred_min / self.t_mini_min
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError(
                f"Invalid value for 't_pred_min': {self.t_pred_min!r}. "
                f"Must be a positive multiple of t_mini_min ({self.t_mini_min})"
            )
        floor, cap, init = (
            self.battery_floor_puh,
            self.battery_capacity_puh,
            self.battery_initial_puh,
        )
        if floor > cap:
            raise ValueError(
                f"Invalid value for 'battery_floor_puh': {floor!r}. "
                f"Must not exceed battery_capacity_puh ({cap})"
            )
        if not floor <= init <= cap:
            raise ValueError(
                f"Invalid value for 'battery_initial_puh': {init!r}. "
                f"Must lie within [{floor}, {cap}]"
            )
        return self

    @property
    def horizon_slots(self) -> int:
        return round(self.t_pred_min / self.t_mini_min)

    @property
    def battery_enabled(self) -> bool:
        return self.battery_capacity_puh > self.battery_floor_puh


class NumericsParams(_Frozen):
    cells: int = 200
    depth_nodes: int = 21
    step_s: float = 30.0
    tolerance: float = 1e-10
    max_iterations: int = 50
    ladder_cells: int = 10_000

    @field_validator("cells")
    @classmethod
    def validate_cells(cls, v: int) -> int:
        if v < 2:
            raise ValueError(f"Value for 'cells' must be >= 2, got {v}")
        return v

    @field_validator("depth_nodes")
    @classmethod
    def validate_depth_nodes(cls, v: int) -> int:
        if v < 3:
            raise ValueError(f"Value for 'depth_nodes' must be >= 3, got {v}")
        return v

    @field_validator("step_s", "tolerance")
    @classmethod
    def validate_positive(cls, v: float, info: ValidationInfo) -> float:
        return _positive(info, v)

    @field_validator("max_iterations", "ladder_cells")
    @classmethod
    def validate_count(cls, v: int, info: ValidationInfo) -> int:
        if v < 1:
            raise ValueError(f"Value for '{info.field_name}' must be >= 1, got {v}")
        return v

    @property
    def step_min(self) -> float:
        return self.step_s / 60.0


class FluxParams(_Frozen):
    sensible_coeff: float = 2.0
    latent_coeff: float = 0.0


class SeriesSourceSchema(_Frozen):
    path: str
    scale: float = 1.0

    @field_validator("scale")
    @classmethod
    def validate_scale(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError(f"Invalid value for 'scale': {v!r}. Must be finite")
        return v


class ScenarioSchema(_Frozen):
    name: str = "scenario"
    start_label: str = "00:00"
    duration_min: float = 120.0
    grid: GridParams = Field(default_factory=GridParams)
    thermal: ThermalParams = Field(default_factory=ThermalParams)
    controller: ControllerParams = Field(default_factory=ControllerParams)
    numerics: NumericsParams = Field(default_factory=NumericsParams)
    flux: FluxParams = Field(default_factory=FluxParams)
    series: dict[str, SeriesSourceSchema] = Field(default_factory=dict)

    @field_validator("duration_min")
    @classmethod
    def validate_duration(cls, v: float, info: ValidationInfo) -> float:
        return _non_negative(info, v)

    @field_validator("series")
    @classmethod
    def validate_series(cls, v: dict[str, Any]) -> dict[str, Any]:
        unknown = sorted(set(v) - set(SERIES_KINDS))
        if unknown:
            raise ValueError(
                f"Unknown series kind(s): {', '.join(unknown)}. "
                f"Available: {', '.join(SERIES_KINDS)}"
            )
        return v

    @model_validator(mode="after")
    def validate_step(self) -> ScenarioSchema:
        slot_s = self.controller.t_mini_min * 60.0
        ratio = slot_s / self.numerics.step_s
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(
                f"Invalid value for 'step_s': {self.numerics.step_s!r}. "
                f"Must divide t_mini_min ({self.controller.t_mini_min} min)"
            )
        return self

    @property
    def steps_per_slot(self) -> int:
        return round(self.controller.t_mini_min * 60.0 / self.numerics.step_s)

