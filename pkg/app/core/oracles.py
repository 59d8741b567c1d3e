"""Brute-force reference solutions the main solvers are checked against.

* ladder: the conductor as a chain of lumped series admittances with a
  nonlinear nodal power balance, solved by sparse Newton on many cells.
* heat: analytic two-Robin steady state, Dirichlet-limit Fourier series and
  the closed-form cable-surface step response.
* enumeration: exhaustive per-stage enumeration against the cascade planner.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from app.config.schema import ControllerParams, NumericsParams, ScenarioSchema, ThermalParams
from app.core.controller import (
    STAGE_BATTERY,
    STAGE_PV,
    STAGE_SWITCH,
    PatternVec,
    Planner,
    battery_patterns,
    pv_patterns,
    rollout,
    score_J,
)
from app.core.errors import NoConvergenceError
from app.core.plant import ControlWord, Plant
from app.core.powerflow import (
    BoundarySpec,
    Conductor,
    Injection,
    InjectionMap,
    cable_conductor,
    line_conductor,
    solve_profile,
)
from app.core.scenario import ExogenousSeries, Scenario
from app.core.thermal import ThermalState, step_cable_surface, step_soil

if TYPE_CHECKING:
    from collections.abc import Callable

    from numpy.typing import NDArray

    from app.config.schema import GridParams
    from app.core.controller import ScoreBreakdown

logger = logging.getLogger(__name__)

LADDER_THRESHOLD = 1e-4
STEADY_THRESHOLD = 1e-6
FOURIER_THRESHOLD = 1e-4
SURFACE_THRESHOLD = 1e-10


@dataclass(frozen=True)
class OracleResult:
    name: str
    max_error: float
    threshold: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return math.isfinite(self.max_error) and self.max_error <= self.threshold


# --- ladder -----------------------------------------------------------------


@dataclass(frozen=True)
class LadderSolution:
    voltage: NDArray[np.complex128]
    loss: float
    iterations: int

    @property
    def amplitude(self) -> NDArray[np.float64]:
        return np.abs(self.voltage)


def _ladder_injections(
    injections: InjectionMap, cells: int, ladder_cells: int
) -> NDArray[np.complex128]:
    """Node powers of a ladder whose cells inherit the top-hat densities of ``cells``."""
    if ladder_cells % cells:
        raise ValueError(f"ladder_cells={ladder_cells} must be a multiple of cells={cells}")
    p, q = injections.densities(cells)
    ratio = ladder_cells // cells
    cell_power = (np.repeat(p, ratio) + 1j * np.repeat(q, ratio)) / ladder_cells
    nodes = np.zeros(ladder_cells + 1, dtype=complex)
    nodes[:-1] += 0.5 * cell_power
    nodes[1:] += 0.5 * cell_power
    return nodes


def solve_ladder(
    conductor: Conductor,
    injections: InjectionMap,
    boundary: BoundarySpec,
    cells: int = 200,
    ladder_cells: int = 10_000,
    tol: float = 1e-11,
    max_iterations: int = 50,
) -> LadderSolution:
    """Newton solve of ``Y_bus V = conj(S) / conj(V)`` at every non-slack node.

    The slack is the fixed-voltage end of a feeder or reverse feeder; the
    other end is open.
    """
    if boundary.head is not None and boundary.tail is None:
        slack, (theta, v) = 0, boundary.head
    elif boundary.tail is not None and boundary.head is None:
        slack, (theta, v) = ladder_cells, boundary.tail
    else:
        raise ValueError("ladder oracle needs exactly one fixed-voltage end")

    n = ladder_cells + 1
    y = (conductor.g - 1j * conductor.b) * ladder_cells
    degree = np.full(n, 2.0)
    degree[0] = degree[-1] = 1.0
    off = -np.ones(n - 1)
    laplacian = sp.diags([off, degree, off], [-1, 0, 1], format="csc")
    keep = np.array([i for i in range(n) if i != slack])
    a_full = (y * laplacian).tocsc()
    a = a_full[keep][:, keep]
    a_slack = a_full[keep][:, [slack]].toarray().ravel()

    power = _ladder_injections(injections, cells, ladder_cells)[keep]
    v_slack = v * np.exp(1j * theta)
    voltage = np.full(keep.size, v_slack, dtype=complex)

    norm = math.inf
    for iteration in range(1, max_iterations + 1):
        mismatch = a @ voltage + a_slack * v_slack - np.conj(power) / np.conj(voltage)
        d = sp.diags(np.conj(power) / np.conj(voltage) ** 2)
        j_e = (a + d).tocsc()
        j_f = (1j * (a - d)).tocsc()
        jac = sp.bmat([[j_e.real, j_f.real], [j_e.imag, j_f.imag]], format="csc")
        rhs = -np.concatenate((mismatch.real, mismatch.imag))
        delta = spsolve(jac, rhs)
        voltage = voltage + delta[: keep.size] + 1j * delta[keep.size :]
        norm = float(np.max(np.abs(delta)))
        logger.debug("ladder Newton %d: |dV| = %.3e", iteration, norm)
        if norm < tol:
            break
    else:
        raise NoConvergenceError(norm, max_iterations, solver="Ladder Newton")

    full = np.empty(n, dtype=complex)
    full[keep] = voltage
    full[slack] = v_slack
    drop = np.diff(full)
    loss = float(np.sum(np.abs(drop) ** 2) * conductor.g * ladder_cells)
    return LadderSolution(full, loss * conductor.loss_factor, iteration)


@dataclass(frozen=True)
class LadderCase:
    name: str
    conductor: Conductor
    injections: InjectionMap
    boundary: BoundarySpec


def ladder_cases(grid: GridParams) -> list[LadderCase]:
    """Line and cable configurations spanning the switch states."""
    line, cable = line_conductor(grid), cable_conductor(grid)
    feeder = BoundarySpec.feeder(grid.ref_phase_rad, 1.0)
    load = Injection(grid.position_pu(grid.load_position_m), -3.0)
    pv = Injection(grid.position_pu(grid.pv_position_m), 2.0)
    battery = Injection(grid.position_pu(grid.battery_position_m), 3.0)
    head_draw = Injection(0.0, grid.cable_load_power_pu)
    p_h = grid.cable_load_power_pu
    return [
        LadderCase("line_load", line, InjectionMap((load,)), feeder),
        LadderCase("line_load_pv", line, InjectionMap((load, pv)), feeder),
        LadderCase("line_all_devices", line, InjectionMap((load, pv, battery, head_draw)), feeder),
        LadderCase(
            "line_reactive",
            line,
            InjectionMap((Injection(0.3, -2.0, -1.0), Injection(0.6, 0.0, 0.5, width=0.2))),
            feeder,
        ),
        LadderCase("cable_switch1", cable, InjectionMap((Injection(1.0, p_h),)), feeder),
        LadderCase(
            "cable_switch2",
            cable,
            InjectionMap((Injection(0.0, p_h),)),
            BoundarySpec.reverse_feeder(grid.ref_phase_rad, 1.0),
        ),
    ]


def ladder_oracle(
    grid: GridParams,
    numerics: NumericsParams,
    ladder_cells: int | None = None,
    threshold: float = LADDER_THRESHOLD,
) -> list[OracleResult]:
    """Max relative amplitude error of ``solve_profile`` against the ladder per case."""
    k = ladder_cells or numerics.ladder_cells
    results = []
    for case in ladder_cases(grid):
        profile = solve_profile(
            case.conductor,
            case.injections,
            case.boundary,
            numerics.cells,
            numerics.tolerance,
            numerics.max_iterations,
        )
        ladder = solve_ladder(case.conductor, case.injections, case.boundary, numerics.cells, k)
        reference = ladder.amplitude[:: k // numerics.cells]
        error = float(np.max(np.abs(profile.v - reference) / reference))
        loss_error = abs(profile.total_loss() - ladder.loss) / max(abs(ladder.loss), 1e-12)
        results.append(
            OracleResult(
                f"ladder/{case.name}",
                error,
                threshold,
                f"loss {profile.total_loss():.6g} vs {ladder.loss:.6g} (rel {loss_error:.2e})",
            )
        )
    return results


# --- heat -------------------------------------------------------------------


def steady_soil_profile(
    params: ThermalParams, depth_grid: NDArray[np.float64], surface_temperature: float
) -> NDArray[np.float64]:
    """Linear steady profile between the snow bath (top) and the cable bath (bottom)."""
    depth = float(depth_grid[-1])
    resistance = (
        1.0 / params.cable_soil_transfer_w_per_m2_k
        + depth / params.soil_conductivity_w_per_m_k
        + 1.0 / params.ground_snow_transfer_w_per_m2_k
    )
    flux = (surface_temperature - params.snow_temperature_c) / resistance
    top = params.snow_temperature_c + flux / params.ground_snow_transfer_w_per_m2_k
    return top + flux * depth_grid / params.soil_conductivity_w_per_m_k


def heat_steady_oracle(
    params: ThermalParams,
    depth_nodes: int = 21,
    surface_temperature: float = 5.0,
    threshold: float = STEADY_THRESHOLD,
) -> OracleResult:
    state = ThermalState.initial(params, 1, depth_nodes)
    soil = state.soil
    surface = np.array([surface_temperature])
    for _ in range(50):
        soil = step_soil(soil, surface, params, state.depth_grid, 1e5)
    expected = steady_soil_profile(params, state.depth_grid, surface_temperature)
    error = float(np.max(np.abs(soil[0] - expected)))
    return OracleResult("heat/steady", error, threshold, f"{depth_nodes} depth nodes")


def fourier_solution(
    depth_grid: NDArray[np.float64], diffusivity: float, t_s: float, terms: int = 50
) -> NDArray[np.float64]:
    """Unit step at the bottom of a column held at zero on top, initially zero."""
    depth = float(depth_grid[-1])
    u = depth_grid / depth
    for n in range(1, terms + 1):
        u = u + (
            2.0
            * (-1.0) ** n
            / (n * math.pi)
            * np.sin(n * math.pi * depth_grid / depth)
            * math.exp(-diffusivity * (n * math.pi / depth) ** 2 * t_s)
        )
    return np.asarray(u)


def heat_fourier_oracle(
    params: ThermalParams,
    depth_nodes: int = 161,
    dt_s: float = 2.5e-5,
    t_s: float = 0.25,
    threshold: float = FOURIER_THRESHOLD,
) -> OracleResult:
    """Transient check in the Dirichlet limit of both Robin ends, at mid-column."""
    dirichlet = params.model_copy(
        update={
            "ground_snow_transfer_w_per_m2_k": 1e9,
            "cable_soil_transfer_w_per_m2_k": 1e9,
            "snow_temperature_c": 0.0,
            "initial_soil_c": 0.0,
        }
    )
    state = ThermalState.initial(dirichlet, 1, depth_nodes)
    soil = state.soil
    surface = np.array([1.0])
    for _ in range(round(t_s / dt_s)):
        soil = step_soil(soil, surface, dirichlet, state.depth_grid, dt_s)
    expected = fourier_solution(state.depth_grid, dirichlet.soil_diffusivity_m2_per_s, t_s)
    mid = depth_nodes // 2
    error = abs(float(soil[0, mid]) - float(expected[mid]))
    return OracleResult("heat/fourier", error, threshold, f"t={t_s} s, dt={dt_s} s")


def heat_surface_oracle(
    params: ThermalParams,
    gamma_w_per_m: float = 250.0,
    dt_s: float = 30.0,
    steps: int = 40,
    threshold: float = SURFACE_THRESHOLD,
) -> OracleResult:
    """Cable-surface step response against its closed-form exponential."""
    state = ThermalState.initial(params, 1, 3)
    gamma = np.array([gamma_w_per_m])
    rate = params.cable_contact_coeff_w_per_m_k / params.cable_heat_capacity_j_per_cm_c
    target = (gamma_w_per_m * 1e-2 - params.radiative_cooling_w_per_cm) / (
        params.cable_contact_coeff_w_per_m_k
    )
    error = 0.0
    for k in range(1, steps + 1):
        offset = step_cable_surface(state, gamma, params, dt_s)
        state = ThermalState(offset, state.soil, state.snow, state.depth_grid)
        expected = target * (1.0 - math.exp(-rate * k * dt_s))
        error = max(error, abs(float(offset[0]) - expected))
    return OracleResult("heat/surface", error, threshold, f"{steps} steps of {dt_s} s")


def heat_oracle(params: ThermalParams, depth_nodes: int = 21) -> list[OracleResult]:
    return [
        heat_steady_oracle(params, depth_nodes),
        heat_fourier_oracle(params),
        heat_surface_oracle(params),
    ]


# --- enumeration ------------------------------------------------------------


def toy_scenario(
    horizon_slots: int = 2,
    cells: int = 50,
    depth_nodes: int = 11,
    snowfall_mm_per_min: float = 0.05,
    battery_initial_puh: float = 10.0,
) -> Scenario:
    """Small constant-weather scenario for exhaustive checks."""
    t_mini = 10.0
    schema = ScenarioSchema(
        name="toy",
        duration_min=t_mini * horizon_slots,
        controller=ControllerParams(
            t_mini_min=t_mini,
            t_pred_min=t_mini * horizon_slots,
            battery_initial_puh=battery_initial_puh,
        ),
        numerics=NumericsParams(cells=cells, depth_nodes=depth_nodes),
    )
    series = ExogenousSeries.constant(
        schema.duration_min,
        schema.numerics.step_s,
        residential_load=-3.0,
        pv_generation=1.0,
        solar_flux=20.0,
        snowfall=snowfall_mm_per_min,
        air_temperature=-2.0,
        wind_speed=1.0,
    )
    return Scenario(schema, series)


def _exhaustive(
    plant: Plant,
    patterns: list[PatternVec],
    objective: Callable[[ScoreBreakdown], float],
) -> tuple[float, list[PatternVec]]:
    """Minimum objective over ``patterns`` and every pattern attaining it."""
    state = plant.initial_state()
    forecast = plant.scenario.series.forecast(0.0, plant.scenario.controller.t_pred_min)
    values = []
    for pattern in patterns:
        if not pattern.is_coupled():
            values.append(math.inf)
            continue
        score = score_J(rollout(plant, state, pattern, forecast), plant.scenario.controller.weights)
        values.append(objective(score))
    best = min(values)
    return best, [p for p, v in zip(patterns, values, strict=True) if v == best]


def enumeration_oracle(scenario: Scenario | None = None) -> list[OracleResult]:
    """Each cascade stage winner must attain the exhaustive minimum of its stage, bit-exact."""
    scenario = scenario or toy_scenario()
    n = scenario.controller.horizon_slots
    planner = Planner(scenario, threads=1)
    plan = planner.plan_step(0, planner.plant.initial_state())
    reference = Plant(scenario)
    default_pv = scenario.controller.stage_a_pv_dest

    all_switch = [
        PatternVec.from_words([ControlWord.default_for(s, default_pv) for s in seq])
        for seq in itertools.product(range(3), repeat=n)
    ]
    stages: list[tuple[str, list[PatternVec], Callable[[ScoreBreakdown], float]]] = [
        (STAGE_SWITCH, all_switch, lambda s: s.j_total)
    ]
    winner_a = plan.stage_winners.get(STAGE_SWITCH)
    if winner_a is not None:
        stages.append(
            (
                STAGE_PV,
                [
                    PatternVec(winner_a.switch_seq, pv, winner_a.battery_seq)
                    for pv in pv_patterns(n)
                ],
                lambda s: s.j_pv,
            )
        )
    winner_b = plan.stage_winners.get(STAGE_PV)
    if winner_b is not None:
        stages.append(
            (
                STAGE_BATTERY,
                [PatternVec(winner_b.switch_seq, winner_b.pv_seq, b) for b in battery_patterns(n)],
                lambda s: s.j_battery,
            )
        )

    results = []
    for stage, patterns, objective in stages:
        best, minimisers = _exhaustive(reference, patterns, objective)
        chosen = plan.stage_winners.get(stage)
        listed = ", ".join(str(p) for p in minimisers)
        if chosen is None:
            error = math.inf
        elif chosen in minimisers:
            error = 0.0
        else:
            chosen_value = _exhaustive(reference, [chosen], objective)[0]
            error = abs(chosen_value - best) / max(1.0, abs(best))
        results.append(
            OracleResult(
                f"enumeration/{stage}",
                error,
                0.0,
                f"{len(patterns)} patterns, chosen {chosen}, exhaustive {listed}",
            )
        )
    return results
