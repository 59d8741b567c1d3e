"""Pytest configuration and fixtures."""

from __future__ import annotations

import json
import tempfile
from collections.abc import Callable, Generator
from pathlib import Path
from typing import Any

import pytest
from click.testing import CliRunner

from app.config.schema import ControllerParams, NumericsParams, ScenarioSchema, ThermalParams
from app.core.scenario import ExogenousSeries, Scenario

SMALL_NUMERICS = {"cells": 50, "depth_nodes": 11}


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create a temporary directory."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def build_scenario(
    duration_min: float = 20.0,
    t_pred_min: float = 20.0,
    controller: dict[str, Any] | None = None,
    thermal: dict[str, Any] | None = None,
    numerics: dict[str, Any] | None = None,
    **values: float,
) -> Scenario:
    """Small constant-weather scenario: M=50, 11 depth nodes, 10 min slots."""
    schema = ScenarioSchema(
        name="small",
        duration_min=duration_min,
        controller=ControllerParams(
            **{"t_mini_min": 10.0, "t_pred_min": t_pred_min, **(controller or {})}
        ),
        thermal=ThermalParams(**(thermal or {})),
        numerics=NumericsParams(**{**SMALL_NUMERICS, **(numerics or {})}),
    )
    series = ExogenousSeries.constant(duration_min, schema.numerics.step_s, **values)
    return Scenario(schema, series)


@pytest.fixture
def make_scenario() -> Callable[..., Scenario]:
    return build_scenario


@pytest.fixture
def small_scenario() -> Scenario:
    """Light load, some PV, snow on the road and steady snowfall."""
    return build_scenario(
        residential_load=-2.0,
        pv_generation=1.0,
        solar_flux=20.0,
        snowfall=0.05,
        air_temperature=-2.0,
        wind_speed=1.0,
    )


def write_series(directory: Path, name: str, rows: list[tuple[Any, Any]]) -> Path:
    path = directory / f"{name}.csv"
    lines = ["time,value"] + [f"{t},{v}" for t, v in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def scenario_config(temp_dir: Path) -> Callable[..., Path]:
    """Write a small scenario config with flat series; returns the config path."""

    def _write(
        duration_min: float = 20.0, overrides: dict[str, Any] | None = None, **constants: float
    ) -> Path:
        values = {
            "residential_load": 2000.0,
            "pv_generation": 1500.0,
            "solar_flux": 20.0,
            "snowfall": 3.0,
            "air_temperature": -2.0,
            "wind_speed": 1.0,
            **constants,
        }
        scales = {
            "residential_load": -1.0 / 3000.0,
            "pv_generation": 1.0 / 3000.0,
            "snowfall": 1.0 / 60.0,
        }
        series: dict[str, Any] = {}
        for kind, value in values.items():
            write_series(temp_dir, kind, [(0, value), (duration_min, value)])
            series[kind] = {"path": f"{kind}.csv", "scale": scales.get(kind, 1.0)}
        config: dict[str, Any] = {
            "name": "small",
            "duration_min": duration_min,
            "controller": {"t_mini_min": 10.0, "t_pred_min": 20.0},
            "numerics": dict(SMALL_NUMERICS),
            "series": series,
        }
        for key, value in (overrides or {}).items():
            if isinstance(value, dict) and isinstance(config.get(key), dict):
                config[key] = {**config[key], **value}
            else:
                config[key] = value
        path = temp_dir / "scenario.json"
        path.write_text(json.dumps(config), encoding="utf-8")
        return path

    return _write
