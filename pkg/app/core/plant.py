"""Discrete control state, battery accounting and the coupled plant step."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np
from scipy.integrate import trapezoid

from app.core.errors import ControlWordError, PowerFlowError
from app.core.powerflow import Injection, InjectionMap, couple_line_and_cable
from app.core.thermal import ThermalState, advance_thermal

if TYPE_CHECKING:
    from app.config.schema import ControllerParams, GridParams
    from app.core.powerflow import CoupledFlow
    from app.core.scenario import Scenario, SeriesSample
    from app.utils.cache import ProfileCache

logger = logging.getLogger(__name__)

SWITCH_OFF, SWITCH_PURCHASED, SWITCH_BATTERY = 0, 1, 2
PV_TO_BATTERY, PV_TO_LINE = 0, 1
BATTERY_IDLE, BATTERY_TO_LINE, BATTERY_TO_CABLE = 0, 1, 2

_EPS = 1e-12


@dataclass(frozen=True, order=True)
class ControlWord:
    """One slot's decision: heating switch index, PV destination, battery destination.

    ``switch``: 0 both switches off, 1 Switch 1 on (cable fed from the line),
    2 Switch 2 on (cable fed from the battery). ``pv``: 1 routes PV to the line,
    0 charges the battery. ``battery``: 0 idle, 1 discharge to the line,
    2 discharge to the cable.
    """

    switch: int
    pv: int
    battery: int

    def __post_init__(self) -> None:
        if self.switch not in (0, 1, 2):
            raise ControlWordError(f"switch index must be 0, 1 or 2, got {self.switch!r}")
        if self.pv not in (0, 1):
            raise ControlWordError(f"pv destination must be 0 or 1, got {self.pv!r}")
        if self.battery not in (0, 1, 2):
            raise ControlWordError(f"battery destination must be 0, 1 or 2, got {self.battery!r}")
        if (self.switch == SWITCH_BATTERY) != (self.battery == BATTERY_TO_CABLE):
            raise ControlWordError(
                f"Switch 2 and battery-to-cable must be selected together: {self}"
            )

    @classmethod
    def from_binaries(
        cls,
        sigma: tuple[int, int, int],
        sigma_pv: int,
        sigma_battery: tuple[int, int, int],
    ) -> ControlWord:
        for name, bits in (("sigma", sigma), ("sigma_battery", sigma_battery)):
            if any(b not in (0, 1) for b in bits) or sum(bits) != 1:
                raise ControlWordError(f"{name} must be one-hot, got {bits!r}")
        return cls(sigma.index(1), sigma_pv, sigma_battery.index(1))

    @classmethod
    def default_for(cls, switch: int, pv: int = PV_TO_LINE) -> ControlWord:
        """Word for ``switch`` with the coupled battery destination."""
        return cls(switch, pv, BATTERY_TO_CABLE if switch == SWITCH_BATTERY else BATTERY_IDLE)

    @property
    def sigma(self) -> tuple[int, int, int]:
        return tuple(int(i == self.switch) for i in range(3))  # type: ignore[return-value]

    @property
    def sigma_pv(self) -> int:
        return self.pv

    @property
    def sigma_battery(self) -> tuple[int, int, int]:
        return tuple(int(i == self.battery) for i in range(3))  # type: ignore[return-value]

    @property
    def discharges(self) -> bool:
        return self.battery != BATTERY_IDLE

    def __str__(self) -> str:
        return f"{self.switch}{self.pv}{self.battery}"


ALL_OFF = ControlWord(SWITCH_OFF, PV_TO_LINE, BATTERY_IDLE)


def all_words() -> list[ControlWord]:
    """Every word satisfying the sum-to-one and coupling constraints."""
    words = []
    for switch, pv, battery in itertools.product(range(3), range(2), range(3)):
        if (switch == SWITCH_BATTERY) == (battery == BATTERY_TO_CABLE):
            words.append(ControlWord(switch, pv, battery))
    return words


@dataclass(frozen=True)
class BatteryState:
    """Stored energy (p.u.·h) with the cumulative ledger since the start of a run."""

    energy: float
    floor: float
    capacity: float
    charged: float = 0.0
    discharged: float = 0.0
    spilled: float = 0.0
    shortfall: float = 0.0

    @classmethod
    def from_params(cls, params: ControllerParams) -> BatteryState:
        return cls(
            energy=params.battery_initial_puh,
            floor=params.battery_floor_puh,
            capacity=params.battery_capacity_puh,
        )

    @property
    def headroom(self) -> float:
        return self.capacity - self.energy

    @property
    def reserve(self) -> float:
        return self.energy - self.floor

    def ledger_residual(self, initial_energy: float) -> float:
        """Zero when the energy change is explained by the ledger."""
        explained = self.charged - self.discharged - self.spilled + self.shortfall
        return (self.energy - initial_energy) - explained


def feasible_words(
    battery: BatteryState,
    slot_h: float,
    cable_draw: float = 10.0,
    line_rate: float = 10.0,
) -> list[ControlWord]:
    """Words the battery can sustain for a whole slot.

    Discharging words are kept only if the worst-case discharge over the slot
    stays above the reserve floor; charging words need headroom.
    """
    words = []
    for word in all_words():
        if word.battery == BATTERY_TO_CABLE:
            worst = cable_draw * slot_h
        elif word.battery == BATTERY_TO_LINE:
            worst = line_rate * slot_h
        else:
            worst = 0.0
        if worst > 0.0 and battery.energy - worst < battery.floor - _EPS:
            continue
        if word.pv == PV_TO_BATTERY and battery.headroom <= _EPS:
            continue
        words.append(word)
    return words


@dataclass(frozen=True)
class BatteryFlows:
    """Battery exchanges implied by a word at one instant (p.u.)."""

    charge: float = 0.0
    line_discharge: float = 0.0
    cable_draw: float = 0.0


def build_injections(
    word: ControlWord,
    sample: SeriesSample,
    grid: GridParams,
    controller: ControllerParams,
) -> tuple[InjectionMap, InjectionMap, BatteryFlows]:
    """Line and cable injection maps for ``word`` plus the implied battery flows."""
    line = InjectionMap()
    load = sample.residential_load
    if load != 0.0:
        line = line.add(Injection(grid.position_pu(grid.load_position_m), load))

    charge = 0.0
    if word.pv == PV_TO_LINE:
        if sample.pv_generation > 0.0:
            line = line.add(Injection(grid.position_pu(grid.pv_position_m), sample.pv_generation))
    else:
        charge = sample.pv_generation * controller.pv_battery_factor

    line_discharge = 0.0
    if word.battery == BATTERY_TO_LINE:
        line_discharge = min(abs(load), controller.battery_line_rate_pu)
        if line_discharge > 0.0:
            line = line.add(Injection(grid.position_pu(grid.battery_position_m), line_discharge))

    p_h = grid.cable_load_power_pu
    cable = InjectionMap()
    cable_draw = 0.0
    if word.switch == SWITCH_PURCHASED:
        # cable head draw lands on the line side of bifurcation point 1
        line = line.add(Injection(0.0, p_h))
        cable = cable.add(Injection(1.0, p_h))
    elif word.switch == SWITCH_BATTERY:
        cable = cable.add(Injection(0.0, p_h))
        cable_draw = -p_h

    return line, cable, BatteryFlows(charge, line_discharge, cable_draw)


def step_battery(
    battery: BatteryState,
    word: ControlWord,
    pv_power: float,
    dt_h: float,
    line_discharge: float = 0.0,
    cable_draw: float = 10.0,
) -> BatteryState:
    """Lossless integration of charge minus discharge, clipped to [floor, capacity]."""
    charge = pv_power if word.pv == PV_TO_BATTERY else 0.0
    discharge = 0.0
    if word.battery == BATTERY_TO_CABLE:
        discharge = cable_draw
    elif word.battery == BATTERY_TO_LINE:
        discharge = line_discharge

    energy = battery.energy + (charge - discharge) * dt_h
    spilled = shortfall = 0.0
    if energy > battery.capacity:
        spilled = energy - battery.capacity
        energy = battery.capacity
        logger.info("Battery full: %.6g p.u.h of charge spilled", spilled)
    elif energy < battery.floor:
        shortfall = battery.floor - energy
        energy = battery.floor
        logger.warning("Battery at reserve floor: %.6g p.u.h of discharge not served", shortfall)

    return replace(
        battery,
        energy=energy,
        charged=battery.charged + charge * dt_h,
        discharged=battery.discharged + discharge * dt_h,
        spilled=battery.spilled + spilled,
        shortfall=battery.shortfall + shortfall,
    )


@dataclass(frozen=True)
class StepRecord:
    """Quantities sampled at the start of one simulation step."""

    t_min: float
    word: ControlWord
    loss_w: float
    vdev_pu: float
    snow_area_mm_m: float
    cost_pu: float
    battery_puh: float
    charge_pu: float = 0.0
    discharge_pu: float = 0.0


@dataclass(frozen=True)
class PlantState:
    t_min: float
    control: ControlWord
    battery: BatteryState
    thermal: ThermalState
    purchased_pu_min: float = 0.0
    loss_w_min: float = 0.0
    snow_mm_m_min: float = 0.0
    cost_pu_min: float = 0.0
    slot_max_vdev_pu: float = 0.0
    last_step: StepRecord | None = None

    @property
    def purchased_puh(self) -> float:
        return self.purchased_pu_min / 60.0

    def snow_area(self, length_m: float) -> float:
        """Snow cross-section along the road, mm·m."""
        return float(trapezoid(self.thermal.snow, dx=length_m / (self.thermal.snow.size - 1)))


class Plant:
    """Advances the coupled electro-thermal system one simulation step at a time."""

    def __init__(self, scenario: Scenario, cache: ProfileCache | None = None) -> None:
        self.scenario = scenario
        self.cache = cache

    @property
    def dt_s(self) -> float:
        return self.scenario.numerics.step_s

    @property
    def slot_h(self) -> float:
        return self.scenario.controller.t_mini_min / 60.0

    def initial_state(self) -> PlantState:
        numerics = self.scenario.numerics
        return PlantState(
            t_min=0.0,
            control=ALL_OFF,
            battery=BatteryState.from_params(self.scenario.controller),
            thermal=ThermalState.initial(
                self.scenario.thermal, numerics.cells + 1, numerics.depth_nodes
            ),
        )

    def feasible_words(self, battery: BatteryState) -> list[ControlWord]:
        return feasible_words(
            battery,
            self.slot_h,
            cable_draw=-self.scenario.grid.cable_load_power_pu,
            line_rate=self.scenario.controller.battery_line_rate_pu,
        )

    def flows(self, word: ControlWord, sample: SeriesSample) -> tuple[CoupledFlow, BatteryFlows]:
        grid = self.scenario.grid
        line_map, cable_map, battery_flows = build_injections(
            word, sample, grid, self.scenario.controller
        )
        flow = couple_line_and_cable(
            word, line_map, cable_map, grid, self.scenario.numerics, self.cache
        )
        return flow, battery_flows

    def advance(self, state: PlantState, word: ControlWord, sample: SeriesSample) -> PlantState:
        """Advance by one step of ``numerics.step_s`` under ``word``.

        Raises:
            PowerFlowError: the line or cable could not be solved (logged with
                the time and word).
        """
        grid = self.scenario.grid
        t_mini = self.scenario.controller.t_mini_min
        dt_min = self.dt_s / 60.0

        try:
            flow, battery_flows = self.flows(word, sample)
        except PowerFlowError as e:
            logger.error("Power flow failed at t=%.2f min under word %s: %s", state.t_min, word, e)
            raise

        loss_w = (flow.line.total_loss() + flow.cable.total_loss()) * grid.base_apparent_power_va
        vdev = flow.line.max_deviation(1.0)
        cost = -grid.cable_load_power_pu if word.switch == SWITCH_PURCHASED else 0.0
        record = StepRecord(
            t_min=state.t_min,
            word=word,
            loss_w=loss_w,
            vdev_pu=vdev,
            snow_area_mm_m=state.snow_area(grid.line_length_m),
            cost_pu=cost,
            battery_puh=state.battery.energy,
            charge_pu=battery_flows.charge,
            discharge_pu=battery_flows.line_discharge + battery_flows.cable_draw,
        )

        gamma_w_per_m = flow.cable.loss_density * grid.w_per_m
        thermal = advance_thermal(
            state.thermal, gamma_w_per_m, sample, self.scenario.thermal, self.dt_s
        )
        battery = step_battery(
            state.battery,
            word,
            battery_flows.charge,
            dt_min / 60.0,
            line_discharge=battery_flows.line_discharge,
            cable_draw=battery_flows.cable_draw,
        )

        slot_start = abs(state.t_min / t_mini - round(state.t_min / t_mini)) < 1e-9
        slot_max = vdev if slot_start else max(state.slot_max_vdev_pu, vdev)
        return PlantState(
            t_min=state.t_min + dt_min,
            control=word,
            battery=battery,
            thermal=thermal,
            purchased_pu_min=state.purchased_pu_min + cost * dt_min,
            loss_w_min=state.loss_w_min + loss_w * dt_min,
            snow_mm_m_min=state.snow_mm_m_min + record.snow_area_mm_m * dt_min,
            cost_pu_min=state.cost_pu_min + cost * dt_min,
            slot_max_vdev_pu=slot_max,
            last_step=record,
        )
