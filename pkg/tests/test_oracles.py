"""Tests for the reference solvers."""

from __future__ import annotations

import numpy as np
import pytest

from app.config.schema import GridParams, NumericsParams, ThermalParams
from app.core.errors import NoConvergenceError
from app.core.oracles import (
    OracleResult,
    enumeration_oracle,
    fourier_solution,
    heat_fourier_oracle,
    heat_oracle,
    heat_steady_oracle,
    heat_surface_oracle,
    ladder_cases,
    ladder_oracle,
    solve_ladder,
    steady_soil_profile,
    toy_scenario,
)
from app.core.powerflow import (
    BoundarySpec,
    Conductor,
    Injection,
    InjectionMap,
    solve_profile,
)

LINE = Conductor(1.0, 1.0, loss_factor=3.0, name="line")


class TestOracleResult:
    def test_passed(self) -> None:
        assert OracleResult("x", 1e-6, 1e-4).passed
        assert not OracleResult("x", 1e-3, 1e-4).passed
        assert not OracleResult("x", float("nan"), 1.0).passed


class TestLadder:
    def test_unloaded_ladder_is_flat(self) -> None:
        ladder = solve_ladder(LINE, InjectionMap(), BoundarySpec.feeder(0.0, 1.0), 10, 100)
        assert np.allclose(ladder.amplitude, 1.0)
        assert ladder.loss == pytest.approx(0.0, abs=1e-12)

    def test_agrees_with_shooting(self) -> None:
        injections = InjectionMap((Injection(0.25, -1.0), Injection(0.5, 0.5)))
        boundary = BoundarySpec.feeder(0.0, 1.0)
        profile = solve_profile(LINE, injections, boundary, cells=50)
        ladder = solve_ladder(LINE, injections, boundary, cells=50, ladder_cells=5000)

        reference = ladder.amplitude[::100]
        assert np.max(np.abs(profile.v - reference) / reference) < 1e-4

    def test_ladder_cells_must_refine_cells(self) -> None:
        with pytest.raises(ValueError, match="multiple"):
            solve_ladder(LINE, InjectionMap(), BoundarySpec.feeder(0.0, 1.0), 30, 100)

    def test_needs_single_slack(self) -> None:
        boundary = BoundarySpec.both_voltages((0.0, 1.0), (0.0, 1.0))
        with pytest.raises(ValueError, match="exactly one"):
            solve_ladder(LINE, InjectionMap(), boundary, 10, 100)

    def test_unsolvable_load_names_the_ladder(self) -> None:
        injections = InjectionMap((Injection(0.25, -5.0),))
        with pytest.raises(NoConvergenceError, match="Ladder Newton did not converge"):
            solve_ladder(LINE, injections, BoundarySpec.feeder(0.0, 1.0), 10, 100)

    def test_shooting_keeps_its_own_message(self) -> None:
        assert str(NoConvergenceError(1e-3, 4)).startswith("Shooting did not converge")

    def test_cases_cover_both_switch_states(self) -> None:
        names = [case.name for case in ladder_cases(GridParams())]
        assert "cable_switch1" in names
        assert "cable_switch2" in names
        assert len(names) == len(set(names))

    @pytest.mark.slow
    def test_all_cases_pass(self) -> None:
        results = ladder_oracle(GridParams(), NumericsParams())
        assert len(results) == 6
        failed = [(r.name, r.max_error) for r in results if not r.passed]
        assert not failed


class TestHeatOracles:
    params = ThermalParams()

    def test_steady(self) -> None:
        assert heat_steady_oracle(self.params).passed

    def test_steady_profile_matches_baths(self) -> None:
        grid = np.linspace(0.0, 0.1, 5)
        profile = steady_soil_profile(self.params, grid, self.params.snow_temperature_c)
        assert np.allclose(profile, self.params.snow_temperature_c)

    def test_fourier_series_limits(self) -> None:
        grid = np.linspace(0.0, 0.1, 11)
        early = fourier_solution(grid, 1e-7, 1.0)
        late = fourier_solution(grid, 1e-7, 1e9)
        assert early[0] == pytest.approx(0.0, abs=1e-12)
        assert early[-1] == pytest.approx(1.0, abs=1e-12)
        assert early[5] < late[5]
        assert np.allclose(late, grid / 0.1, atol=1e-9)

    def test_fourier(self) -> None:
        result = heat_fourier_oracle(self.params)
        assert result.passed, result.max_error

    def test_surface(self) -> None:
        result = heat_surface_oracle(self.params)
        assert result.max_error <= 1e-10

    def test_surface_with_radiative_cooling(self) -> None:
        cooled = self.params.model_copy(update={"radiative_cooling_w_per_cm": 0.5})
        assert heat_surface_oracle(cooled).passed

    def test_heat_oracle_names(self) -> None:
        names = [r.name for r in heat_oracle(self.params, depth_nodes=11)]
        assert names == ["heat/steady", "heat/fourier", "heat/surface"]


class TestEnumerationOracle:
    def test_toy_scenario(self) -> None:
        scenario = toy_scenario(horizon_slots=2)
        assert scenario.controller.horizon_slots == 2
        assert scenario.duration_min == 20.0

    def test_cascade_matches_exhaustive(self) -> None:
        results = enumeration_oracle(toy_scenario(horizon_slots=2))
        assert [r.name for r in results] == [
            "enumeration/switch",
            "enumeration/pv",
            "enumeration/battery",
        ]
        assert all(r.passed for r in results), [r.detail for r in results]

    def test_with_depleted_battery(self) -> None:
        results = enumeration_oracle(toy_scenario(horizon_slots=2, battery_initial_puh=2.5))
        assert all(r.passed for r in results), [r.detail for r in results]
