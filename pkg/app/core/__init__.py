"""Simulation core: series, power flow, thermal model, plant and planner."""

from app.core.comparison import ScenarioComparison
from app.core.controller import Planner, RunReport, ScoreBreakdown, run_closed_loop
from app.core.errors import (
    ConfigError,
    ControlWordError,
    PowerFlowError,
    RoadHeatError,
    SeriesError,
)
from app.core.exporter import TrajectoryExporter
from app.core.plant import ControlWord, Plant, PlantState
from app.core.scenario import ExogenousSeries, Scenario, SeriesSample, load_scenario

__all__ = [
    "ConfigError",
    "ControlWord",
    "ControlWordError",
    "ExogenousSeries",
    "Plant",
    "PlantState",
    "Planner",
    "PowerFlowError",
    "RoadHeatError",
    "RunReport",
    "Scenario",
    "ScenarioComparison",
    "ScoreBreakdown",
    "SeriesError",
    "SeriesSample",
    "TrajectoryExporter",
    "load_scenario",
    "run_closed_loop",
]
