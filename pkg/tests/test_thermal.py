"""Tests for cable-surface, soil-column and snow updates."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.config.schema import ThermalParams
from app.core.oracles import steady_soil_profile
from app.core.scenario import SeriesSample
from app.core.thermal import (
    CABLE_LOSS_FACTOR,
    MeltFluxes,
    ThermalState,
    advance_thermal,
    melt_fluxes,
    steady_surface_offset,
    step_cable_surface,
    step_snow,
    step_soil,
    step_soil_column,
)

PARAMS = ThermalParams()


def _state(positions: int = 3, depth_nodes: int = 21, **updates: float) -> ThermalState:
    return ThermalState.initial(PARAMS.model_copy(update=updates), positions, depth_nodes)


class TestCableSurface:
    def test_no_heat_stays_at_rest(self) -> None:
        offset = step_cable_surface(_state(), np.zeros(3), PARAMS, 30.0)
        assert np.all(offset == 0.0)

    def test_single_step_matches_exponential(self) -> None:
        gamma = np.full(3, 10_000.0)
        offset = step_cable_surface(_state(), gamma, PARAMS, 30.0)

        target = 10_000.0 * CABLE_LOSS_FACTOR / PARAMS.cable_contact_coeff_w_per_m_k
        rate = PARAMS.cable_contact_coeff_w_per_m_k / PARAMS.cable_heat_capacity_j_per_cm_c
        expected = target * (1.0 - math.exp(-rate * 30.0))
        assert np.allclose(offset, expected, rtol=0, atol=1e-10)

    def test_long_run_reaches_steady_offset(self) -> None:
        state = _state(positions=1)
        gamma = np.array([250.0])
        for _ in range(10_000):
            state = ThermalState(
                step_cable_surface(state, gamma, PARAMS, 30.0),
                state.soil,
                state.snow,
                state.depth_grid,
            )
        assert state.surf_offset[0] == pytest.approx(
            steady_surface_offset(250.0, PARAMS), abs=1e-9
        )

    def test_rejects_non_positive_step(self) -> None:
        with pytest.raises(ValueError):
            step_cable_surface(_state(), np.zeros(3), PARAMS, 0.0)


class TestSoil:
    def test_equilibrium_is_unchanged(self) -> None:
        state = _state()
        soil = step_soil(state.soil, np.zeros(3), PARAMS, state.depth_grid, 30.0)
        assert np.allclose(soil, 0.0, atol=1e-15)

    def test_converges_to_two_robin_profile(self) -> None:
        state = _state(positions=1)
        soil = state.soil
        for _ in range(50):
            soil = step_soil(soil, np.array([5.0]), PARAMS, state.depth_grid, 1e5)
        expected = steady_soil_profile(PARAMS, state.depth_grid, 5.0)
        assert np.max(np.abs(soil[0] - expected)) <= 1e-6

    def test_single_column_matches_batch(self) -> None:
        state = _state()
        state = ThermalState(np.array([1.0, 2.0, 3.0]), state.soil, state.snow, state.depth_grid)
        batch = step_soil(state.soil, state.surface_temperature, PARAMS, state.depth_grid, 30.0)
        column = step_soil_column(state, 1, PARAMS, 30.0)
        assert np.allclose(column, batch[1], atol=1e-14)

    def test_large_steps_do_not_oscillate(self) -> None:
        state = _state(positions=1)
        soil = state.soil
        for _ in range(5):
            soil = step_soil(soil, np.array([4.0]), PARAMS, state.depth_grid, 600.0)
            # heated from the cable side: temperature rises with depth
            assert np.all(np.diff(soil[0]) >= -1e-12)

    @settings(max_examples=40, deadline=None)
    @given(
        initial=st.lists(st.floats(-5.0, 5.0), min_size=11, max_size=11),
        surface=st.floats(-5.0, 5.0),
        dt_s=st.floats(1.0, 1e4),
    )
    def test_maximum_principle(self, initial: list[float], surface: float, dt_s: float) -> None:
        state = _state(positions=1, depth_nodes=11)
        soil = np.array([initial])
        lo = min(min(initial), surface, PARAMS.snow_temperature_c)
        hi = max(max(initial), surface, PARAMS.snow_temperature_c)
        stepped = step_soil(soil, np.array([surface]), PARAMS, state.depth_grid, dt_s)
        assert np.all(stepped >= lo - 1e-9)
        assert np.all(stepped <= hi + 1e-9)


class TestMeltFluxes:
    def test_equilibrium_has_no_ground_flux(self) -> None:
        fluxes = melt_fluxes(_state(), SeriesSample(solar_flux=12.0), PARAMS)
        assert np.all(fluxes.mu1 == 12.0)
        assert np.all(fluxes.mu2 == 0.0)

    def test_warm_ground(self) -> None:
        state = _state(initial_soil_c=1.0)
        fluxes = melt_fluxes(state, SeriesSample(), PARAMS)
        assert np.allclose(fluxes.mu2, 88.0)

    def test_mu1_sums_series(self) -> None:
        sample = SeriesSample(solar_flux=10.0, sensible_flux=-4.0, latent_flux=1.5)
        fluxes = melt_fluxes(_state(), sample, PARAMS)
        assert np.allclose(fluxes.mu1, 7.5)


def _fluxes(total: float, size: int = 1) -> MeltFluxes:
    return MeltFluxes(mu1=np.full(size, total), mu2=np.zeros(size))


class TestSnow:
    def test_pure_accumulation(self) -> None:
        snow = step_snow(np.array([30.0]), _fluxes(0.0), 0.2, PARAMS, 1.0)
        assert snow[0] == pytest.approx(30.2)

    def test_clamped_at_zero(self) -> None:
        snow = step_snow(np.array([0.0]), _fluxes(1e6), 0.0, PARAMS, 1.0)
        assert snow[0] == 0.0

    def test_hand_evaluated_melt(self) -> None:
        snow = step_snow(np.array([30.0]), _fluxes(167.4), 0.0, PARAMS, 10.0)
        assert snow[0] == pytest.approx(30.0 - (1.792e-4 / 0.06) * 167.4 * 10.0, abs=1e-12)
        assert snow[0] == pytest.approx(25.0, abs=1e-3)

    def test_negative_flux_does_not_grow_snow(self) -> None:
        snow = step_snow(np.array([10.0]), _fluxes(-50.0), 0.0, PARAMS, 1.0)
        assert snow[0] == 10.0

    @settings(max_examples=200)
    @given(
        depth=st.floats(0.0, 100.0),
        flux=st.floats(-1e4, 1e4),
        snowfall=st.floats(0.0, 1.0),
        dt_min=st.floats(0.01, 60.0),
    )
    def test_never_negative(
        self, depth: float, flux: float, snowfall: float, dt_min: float
    ) -> None:
        snow = step_snow(np.array([depth]), _fluxes(flux), snowfall, PARAMS, dt_min)
        assert snow[0] >= 0.0

    @pytest.mark.slow
    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_trajectory_never_negative(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        snow = rng.uniform(0.0, 50.0, size=16)
        # 200 trajectories of 5000 steps
        for _ in range(5000):
            flux = rng.uniform(-2e3, 1e4, size=16)
            fluxes = MeltFluxes(mu1=flux, mu2=rng.uniform(-500.0, 500.0, size=16))
            snowfall = rng.uniform(0.0, 0.5) if rng.random() < 0.3 else 0.0
            snow = step_snow(snow, fluxes, snowfall, PARAMS, rng.uniform(0.01, 10.0))
            assert snow.min() >= 0.0

    def test_zero_melt_conserves_snowfall(self) -> None:
        state = _state(positions=5, depth_nodes=11)
        sample = SeriesSample(snowfall=0.05)
        steps = 240
        for _ in range(steps):
            state = advance_thermal(state, np.zeros(5), sample, PARAMS, 30.0)
        expected = PARAMS.initial_snow_mm + 0.05 * steps * 0.5
        assert np.allclose(state.snow, expected, rtol=0, atol=1e-11)


class TestAdvanceThermal:
    def test_heating_melts_snow(self) -> None:
        state = _state(positions=3, depth_nodes=11)
        gamma = np.full(3, 5_000.0)
        for _ in range(40):
            state = advance_thermal(state, gamma, SeriesSample(), PARAMS, 30.0)
        assert np.all(state.surf_offset > 0.0)
        assert np.all(state.soil[:, 0] > 0.0)
        assert np.all(state.snow < PARAMS.initial_snow_mm)

    def test_reported_surface_temperature(self) -> None:
        state = _state(initial_soil_c=-1.0)
        assert np.allclose(state.surface_temperature, -1.0)
        assert state.depth_cm[-1] == pytest.approx(PARAMS.burial_depth_cm)
