"""Tests for the four-state voltage profile solver."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import trapezoid

from app.config.schema import GridParams, NumericsParams
from app.core.errors import NoConvergenceError, PowerFlowError
from app.core.plant import ControlWord
from app.core.powerflow import (
    BoundarySpec,
    Conductor,
    Injection,
    InjectionMap,
    VoltageProfile,
    cable_conductor,
    couple_line_and_cable,
    line_conductor,
    loss_density_cable,
    loss_density_line,
    ode_residuals,
    solve_profile,
)
from app.utils.cache import ProfileCache

LINE = Conductor(1.0, 1.0, loss_factor=3.0, name="line")
FEEDER = BoundarySpec.feeder(0.0, 1.0)


def _profile(v: float, s: float, w: float, nodes: int = 3) -> VoltageProfile:
    full = np.full(nodes, 1.0)
    return VoltageProfile(
        x=np.linspace(0.0, 1.0, nodes),
        theta=np.zeros(nodes),
        v=v * full,
        s=s * full,
        w=w * full,
        loss_density=np.zeros(nodes),
    )


class TestSolveProfile:
    def test_zero_injection_is_flat(self) -> None:
        profile = solve_profile(LINE, InjectionMap(), FEEDER, cells=50)

        assert np.allclose(profile.v, 1.0, atol=1e-10, rtol=0)
        assert np.allclose(profile.theta, 0.0, atol=1e-10)
        assert np.allclose(profile.s, 0.0, atol=1e-10)
        assert np.allclose(profile.w, 0.0, atol=1e-10)
        assert profile.total_loss() == pytest.approx(0.0, abs=1e-10)

    def test_boundary_values_met(self) -> None:
        injections = InjectionMap((Injection(0.25, -1.0), Injection(0.5, 0.5)))
        profile = solve_profile(LINE, injections, BoundarySpec.feeder(0.1, 1.0), cells=100)

        assert profile.v[0] == pytest.approx(1.0, abs=1e-9)
        assert profile.theta[0] == pytest.approx(0.1, abs=1e-12)
        assert profile.s[-1] == pytest.approx(0.0, abs=1e-12)
        assert profile.w[-1] == pytest.approx(0.0, abs=1e-12)

    def test_cable_under_load_decreases_monotonically(self) -> None:
        cable = cable_conductor(GridParams())
        injections = InjectionMap((Injection(0.99, -10.0),))
        profile = solve_profile(cable, injections, FEEDER, cells=100)

        assert profile.v[0] == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.diff(profile.v) <= 1e-12)
        assert profile.v[-1] < 1.0

    def test_reflection_symmetry(self) -> None:
        cable = cable_conductor(GridParams())
        cells = 50
        head_fed = solve_profile(
            cable, InjectionMap((Injection(0.95, -10.0),)), FEEDER, cells=cells
        )
        tail_fed = solve_profile(
            cable,
            InjectionMap((Injection(0.05, -10.0),)),
            BoundarySpec.reverse_feeder(0.0, 1.0),
            cells=cells,
        )

        assert np.allclose(tail_fed.v, head_fed.v[::-1], atol=1e-8)
        assert np.allclose(tail_fed.s, -head_fed.s[::-1], atol=1e-8)
        assert np.allclose(tail_fed.w, -head_fed.w[::-1], atol=1e-8)
        assert tail_fed.total_loss() == pytest.approx(head_fed.total_loss(), rel=1e-8)

    def test_voltage_fixed_at_both_ends(self) -> None:
        injections = InjectionMap((Injection(0.5, -0.5),))
        boundary = BoundarySpec.both_voltages((0.0, 1.0), (-0.01, 0.99))
        profile = solve_profile(LINE, injections, boundary, cells=50)

        assert profile.v[-1] == pytest.approx(0.99, abs=1e-9)
        assert profile.theta[-1] == pytest.approx(-0.01, abs=1e-9)

    def test_loss_matches_quadrature(self) -> None:
        injections = InjectionMap((Injection(0.25, -1.0), Injection(0.75, -0.5)))
        profile = solve_profile(LINE, injections, FEEDER, cells=200)

        assert profile.total_loss() > 0
        assert profile.total_loss() == pytest.approx(
            trapezoid(profile.loss_density, profile.x), rel=1e-3
        )

    def test_residuals_shrink_with_refinement(self) -> None:
        injections = InjectionMap((Injection(0.0, -1.0, width=1.0),))
        coarse = solve_profile(LINE, injections, FEEDER, cells=50)
        fine = solve_profile(LINE, injections, FEEDER, cells=100)

        coarse_err = float(np.max(np.abs(ode_residuals(coarse))))
        fine_err = float(np.max(np.abs(ode_residuals(fine))))
        assert fine_err < coarse_err / 3.0

    def test_no_convergence_carries_residual(self) -> None:
        injections = InjectionMap((Injection(0.5, -1.0),))
        with pytest.raises(NoConvergenceError) as exc_info:
            solve_profile(LINE, injections, FEEDER, cells=20, max_iterations=0)
        assert exc_info.value.residual > 0

    def test_overload_fails(self) -> None:
        injections = InjectionMap((Injection(0.5, -1e4),))
        with pytest.raises(PowerFlowError):
            solve_profile(LINE, injections, FEEDER, cells=20)


class TestInputs:
    def test_injection_outside_line(self) -> None:
        with pytest.raises(ValueError, match="outside"):
            Injection(1.5, -1.0)

    def test_boundary_must_be_well_posed(self) -> None:
        with pytest.raises(ValueError):
            BoundarySpec(head=(0.0, 1.0))
        with pytest.raises(ValueError, match="no voltage reference"):
            BoundarySpec(head_flow=(0.0, 0.0), tail_flow=(0.0, 0.0))

    def test_point_density_integrates_to_power(self) -> None:
        injections = InjectionMap((Injection(0.25, -2.0), Injection(0.3, 0.0, width=0.2)))
        p, _ = injections.densities(40)
        assert p.sum() / 40 == pytest.approx(-2.0)
        assert p[10] == pytest.approx(-80.0)

    def test_spread_at_tail_stays_on_conductor(self) -> None:
        p, q = InjectionMap((Injection(1.0, -1.0, width=0.1),)).densities(10)

        assert np.all(np.isfinite(p))
        assert p[-1] == pytest.approx(-10.0)
        assert p.sum() / 10 == pytest.approx(-1.0)
        assert np.all(q == 0.0)

    def test_overhanging_spread_moves_back(self) -> None:
        p, q = InjectionMap((Injection(0.95, -1.0, 0.5, width=0.1),)).densities(20)

        assert np.allclose(p[18:], -10.0)
        assert np.allclose(q[18:], 5.0)
        assert np.all(p[:18] == 0.0)

    def test_tail_spread_solves(self) -> None:
        injections = InjectionMap((Injection(1.0, -0.2, width=0.1),))
        profile = solve_profile(LINE, injections, FEEDER, cells=50)

        assert np.all(np.isfinite(profile.v))
        assert profile.v[-1] < 1.0


class TestLossDensity:
    def test_line_at_rest(self) -> None:
        assert np.all(loss_density_line(_profile(1.0, 0.0, 0.0), 1.0) == 0.0)

    def test_line_substitution(self) -> None:
        assert loss_density_line(_profile(1.0, 0.2, 0.1), 1.0) == pytest.approx(0.15)

    def test_cable_substitution(self) -> None:
        assert loss_density_cable(_profile(1.0, 0.2, 0.1), 0.5) == pytest.approx(0.025)

    def test_de_energized_cable(self) -> None:
        profile = VoltageProfile.de_energized(10)
        assert np.all(loss_density_cable(profile, 0.5) == 0.0)
        assert profile.total_loss() == 0.0
        assert profile.max_deviation(1.0) == 0.0

    def test_zero_amplitude_is_division_error(self) -> None:
        with pytest.raises(ZeroDivisionError):
            loss_density_line(_profile(0.0, 0.1, 0.1), 1.0)


class TestCoupling:
    grid = GridParams()
    numerics = NumericsParams(cells=50)
    line_load = InjectionMap((Injection(0.25, -1.0),))

    def test_switches_off_leaves_cable_dark(self) -> None:
        flow = couple_line_and_cable(
            ControlWord(0, 1, 0), self.line_load, InjectionMap(), self.grid, self.numerics
        )
        assert not flow.cable.energized
        assert np.all(flow.cable.v == 0.0)
        assert flow.v2 == pytest.approx(float(flow.line.v[-1]))

    def test_switch_two_uses_line_tail_phase(self) -> None:
        cable_load = InjectionMap((Injection(0.0, -10.0),))
        flow = couple_line_and_cable(
            ControlWord(2, 1, 2), self.line_load, cable_load, self.grid, self.numerics
        )
        assert flow.cable.energized
        assert flow.cable.theta[-1] == pytest.approx(flow.theta2, abs=1e-12)
        assert flow.cable.v[-1] == pytest.approx(1.0, abs=1e-9)

    def test_line_unaffected_by_switch_two(self) -> None:
        off = couple_line_and_cable(
            ControlWord(0, 1, 0), self.line_load, InjectionMap(), self.grid, self.numerics
        )
        on = couple_line_and_cable(
            ControlWord(2, 1, 2),
            self.line_load,
            InjectionMap((Injection(0.0, -10.0),)),
            self.grid,
            self.numerics,
        )
        assert np.array_equal(off.line.v, on.line.v)

    def test_cache_reuses_profiles(self) -> None:
        cache = ProfileCache()
        word = ControlWord(1, 1, 0)
        line = self.line_load.add(Injection(0.0, -10.0))
        cable = InjectionMap((Injection(0.99, -10.0),))
        first = couple_line_and_cable(word, line, cable, self.grid, self.numerics, cache)
        second = couple_line_and_cable(word, line, cable, self.grid, self.numerics, cache)

        assert cache.hits == 2
        assert np.array_equal(first.cable.v, second.cable.v)

    def test_conductors_from_grid(self) -> None:
        assert line_conductor(self.grid).loss_factor == 3.0
        assert line_conductor(self.grid).g == 10.0
        assert cable_conductor(self.grid).g == 50.0

    def test_default_line_carries_peak_load(self) -> None:
        load = Injection(self.grid.position_pu(self.grid.load_position_m), -4.0)
        profile = solve_profile(line_conductor(self.grid), InjectionMap((load,)), FEEDER, 50)

        assert 0.9 < profile.v.min() < 1.0
