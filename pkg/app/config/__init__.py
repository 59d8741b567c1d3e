"""Configuration management."""

from app.config.schema import (
    ControllerParams,
    GridParams,
    NumericsParams,
    ScenarioSchema,
    ThermalParams,
    WeightsSchema,
)
from app.config.settings import ScenarioSettings

__all__ = [
    "ControllerParams",
    "GridParams",
    "NumericsParams",
    "ScenarioSchema",
    "ScenarioSettings",
    "ThermalParams",
    "WeightsSchema",
]
