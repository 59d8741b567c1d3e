"""Cascaded predictive switching: enumerate patterns, roll out, score, apply one slot."""

from __future__ import annotations

import asyncio
import itertools
import logging
import math
import os
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

from app.core.errors import ConfigError, ControlWordError, PowerFlowError
from app.core.plant import (
    ALL_OFF,
    BATTERY_TO_CABLE,
    PV_TO_BATTERY,
    SWITCH_BATTERY,
    ControlWord,
    Plant,
    PlantState,
    StepRecord,
    all_words,
)

if TYPE_CHECKING:
    from app.config.schema import WeightsSchema
    from app.core.powerflow import CoupledFlow
    from app.core.scenario import Scenario, SeriesSample
    from app.utils.cache import ProfileCache

logger = logging.getLogger(__name__)

# Off first, then battery-fed, then purchased
SWITCH_ORDER = (0, 2, 1)
PV_ORDER = (0, 1)
BATTERY_ORDER = (0, 1, 2)

STAGE_SWITCH = "switch"
STAGE_PV = "pv"
STAGE_BATTERY = "battery"
STAGE_JOINT = "joint"

MAX_JOINT_SLOTS = 3


@dataclass(frozen=True)
class PatternVec:
    """Per-slot decisions over the prediction horizon."""

    switch_seq: tuple[int, ...]
    pv_seq: tuple[int, ...]
    battery_seq: tuple[int, ...]

    def __post_init__(self) -> None:
        if not len(self.switch_seq) == len(self.pv_seq) == len(self.battery_seq):
            raise ControlWordError(
                f"pattern sequences differ in length: {len(self.switch_seq)}, "
                f"{len(self.pv_seq)}, {len(self.battery_seq)}"
            )

    @classmethod
    def from_words(cls, words: Sequence[ControlWord]) -> PatternVec:
        return cls(
            tuple(w.switch for w in words),
            tuple(w.pv for w in words),
            tuple(w.battery for w in words),
        )

    @property
    def horizon(self) -> int:
        return len(self.switch_seq)

    def words(self) -> tuple[ControlWord, ...]:
        """Assemble the per-slot words; raises ControlWordError on a coupling violation."""
        return tuple(
            ControlWord(s, p, b)
            for s, p, b in zip(self.switch_seq, self.pv_seq, self.battery_seq, strict=True)
        )

    def is_coupled(self) -> bool:
        return all(
            (s == SWITCH_BATTERY) == (b == BATTERY_TO_CABLE)
            for s, b in zip(self.switch_seq, self.battery_seq, strict=True)
        )

    def __str__(self) -> str:
        seqs = (self.switch_seq, self.pv_seq, self.battery_seq)
        return "/".join("".join(str(d) for d in seq) for seq in seqs)


@dataclass(frozen=True)
class ScoreBreakdown:
    """Evaluation terms of one rollout.

    Units: ``p_loss`` W·min, ``v_fluc`` V, ``s_snow`` mm·m·min, ``m_cost``
    p.u.·min, storage terms min/(p.u.·h).
    """

    j_total: float = 0.0
    p_loss: float = 0.0
    v_fluc: float = 0.0
    s_snow: float = 0.0
    m_cost: float = 0.0
    v_pvfluc: float = 0.0
    b_stor1: float = 0.0
    v_batteryfluc: float = 0.0
    b_stor2: float = 0.0
    j_pv: float = 0.0
    j_battery: float = 0.0

    @classmethod
    def infeasible(cls) -> ScoreBreakdown:
        inf = math.inf
        return cls(inf, inf, inf, inf, inf, inf, 0.0, inf, 0.0, inf, inf)

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.j_total)


@dataclass(frozen=True)
class Rollout:
    """Step records of one simulated pattern over the horizon."""

    pattern: PatternVec
    records: tuple[StepRecord, ...]
    steps_per_slot: int
    dt_min: float
    ref_amplitude_v: float
    zeta_guard: float = 0.1
    feasible: bool = True
    final_state: PlantState | None = None
    failure: str | None = None

    def slot_records(self) -> list[tuple[StepRecord, ...]]:
        n = self.steps_per_slot
        return [self.records[i : i + n] for i in range(0, len(self.records), n)]


def _zeta(energy_puh: float, guard: float) -> float:
    return 1.0 / max(energy_puh, guard)


def _terms(rollout: Rollout) -> dict[str, float]:
    dt = rollout.dt_min
    slot_max = [max((r.vdev_pu for r in slot), default=0.0) for slot in rollout.slot_records()]
    v_fluc = sum(slot_max) * rollout.ref_amplitude_v
    b_stor1 = b_stor2 = 0.0
    for r in rollout.records:
        if r.word.pv == PV_TO_BATTERY:
            b_stor1 += _zeta(r.battery_puh, rollout.zeta_guard) * dt
        if r.word.discharges:
            b_stor2 += _zeta(r.battery_puh, rollout.zeta_guard) * dt
    return {
        "p_loss": sum(r.loss_w for r in rollout.records) * dt,
        "v_fluc": v_fluc,
        "s_snow": sum(r.snow_area_mm_m for r in rollout.records) * dt,
        "m_cost": sum(r.cost_pu for r in rollout.records) * dt,
        "b_stor1": b_stor1,
        "b_stor2": b_stor2,
    }


def score_J(rollout: Rollout, weights: WeightsSchema) -> ScoreBreakdown:
    """All evaluation terms of a rollout, left-Riemann in time."""
    if not rollout.feasible:
        return ScoreBreakdown.infeasible()
    t = _terms(rollout)
    j_total = (
        weights.w_loss * t["p_loss"]
        + weights.w_fluc * t["v_fluc"]
        + weights.w_snow * t["s_snow"]
        + weights.w_cost * t["m_cost"]
    )
    return ScoreBreakdown(
        j_total=j_total,
        p_loss=t["p_loss"],
        v_fluc=t["v_fluc"],
        s_snow=t["s_snow"],
        m_cost=t["m_cost"],
        v_pvfluc=t["v_fluc"],
        b_stor1=t["b_stor1"],
        v_batteryfluc=t["v_fluc"],
        b_stor2=t["b_stor2"],
        j_pv=weights.w_pvfluc * t["v_fluc"] - weights.w_stor1 * t["b_stor1"],
        j_battery=weights.w_batteryfluc * t["v_fluc"] + weights.w_stor2 * t["b_stor2"],
    )


def score_J_pv(rollout: Rollout, weights: WeightsSchema) -> float:
    """Voltage fluctuation minus the reward for charging a depleted battery."""
    return score_J(rollout, weights).j_pv


def score_J_battery(rollout: Rollout, weights: WeightsSchema) -> float:
    """Voltage fluctuation plus the penalty for discharging a depleted battery."""
    return score_J(rollout, weights).j_battery


def rollout(
    plant: Plant,
    state: PlantState,
    pattern: PatternVec,
    forecast: Sequence[SeriesSample],
) -> Rollout:
    """Simulate ``pattern`` from ``state`` under ``forecast`` without touching ``state``.

    A slot whose word the battery cannot sustain at the slot start, or whose
    power flow cannot be solved, makes the whole rollout infeasible.
    """
    scenario = plant.scenario
    steps = scenario.schema.steps_per_slot
    words = pattern.words()
    needed = steps * len(words)
    if len(forecast) < needed:
        raise ConfigError(f"forecast covers {len(forecast)} steps, rollout needs {needed}")

    records: list[StepRecord] = []
    feasible = True
    failure: str | None = None
    for slot, word in enumerate(words):
        if word not in plant.feasible_words(state.battery):
            logger.debug(
                "Pattern %s infeasible at slot %d (battery %.4g)",
                pattern,
                slot,
                state.battery.energy,
            )
            feasible = False
            failure = "battery"
            break
        try:
            for j in range(steps):
                state = plant.advance(state, word, forecast[slot * steps + j])
                assert state.last_step is not None
                records.append(state.last_step)
        except PowerFlowError as e:
            logger.info("Pattern %s dropped at slot %d: %s", pattern, slot, e)
            feasible = False
            failure = str(e)
            break

    return Rollout(
        pattern=pattern,
        records=tuple(records),
        steps_per_slot=steps,
        dt_min=plant.dt_s / 60.0,
        ref_amplitude_v=scenario.grid.ref_amplitude_v,
        zeta_guard=scenario.controller.zeta_guard_puh,
        feasible=feasible,
        final_state=state if feasible else None,
        failure=failure,
    )


def argmin(values: Sequence[float]) -> int | None:
    """Index of the first strictly smallest finite value, or None if none is finite."""
    best: int | None = None
    for i, value in enumerate(values):
        if not math.isfinite(value):
            continue
        if best is None or value < values[best]:
            best = i
    return best


def switch_patterns(horizon: int) -> list[tuple[int, ...]]:
    return list(itertools.product(SWITCH_ORDER, repeat=horizon))


def pv_patterns(horizon: int) -> list[tuple[int, ...]]:
    return list(itertools.product(PV_ORDER, repeat=horizon))


def battery_patterns(horizon: int) -> list[tuple[int, ...]]:
    return list(itertools.product(BATTERY_ORDER, repeat=horizon))


def _word_rank(word: ControlWord) -> tuple[int, int, int]:
    return (SWITCH_ORDER.index(word.switch), word.pv, word.battery)


def joint_patterns(horizon: int) -> list[PatternVec]:
    """Every coupling-valid word sequence, in tie-break order."""
    words = sorted(all_words(), key=_word_rank)
    return [PatternVec.from_words(seq) for seq in itertools.product(words, repeat=horizon)]


@dataclass(frozen=True)
class CandidateScore:
    k: int
    stage: str
    pattern: PatternVec
    score: ScoreBreakdown
    objective: float

    def to_row(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "stage": self.stage,
            "pattern": str(self.pattern),
            "J": self.score.j_total,
            "P_loss": self.score.p_loss,
            "V_fluc": self.score.v_fluc,
            "S_snow": self.score.s_snow,
            "M_cost": self.score.m_cost,
        }


@dataclass
class PlanResult:
    k: int
    word: ControlWord
    pattern: PatternVec
    score: ScoreBreakdown
    enumerated: int = 0
    evaluated: int = 0
    fallback: bool = False
    wall_time_s: float = 0.0
    stage_winners: dict[str, PatternVec] = field(default_factory=dict)
    candidates: list[CandidateScore] = field(default_factory=list)


class Planner:
    """Receding-horizon planner over one scenario.

    Stage A picks the switch pattern minimising J, stage B the PV routing
    minimising J_pv under it, stage C the battery routing minimising J_battery
    under both. ``joint=True`` instead minimises J over every word sequence.
    """

    def __init__(
        self,
        scenario: Scenario,
        threads: int | None = None,
        joint: bool = False,
        cache: ProfileCache | None = None,
        log_candidates: bool = False,
    ) -> None:
        self.scenario = scenario
        self.plant = Plant(scenario, cache)
        self.threads = max(1, threads if threads is not None else (os.cpu_count() or 1))
        self.joint = joint
        self.log_candidates = log_candidates
        self.horizon = scenario.controller.horizon_slots
        if joint and self.horizon > MAX_JOINT_SLOTS:
            raise ConfigError(
                f"joint enumeration supports at most {MAX_JOINT_SLOTS} slots, "
                f"horizon has {self.horizon}"
            )

    @property
    def weights(self) -> WeightsSchema:
        return self.scenario.controller.weights

    def forecast(self, state: PlantState) -> list[SeriesSample]:
        return self.scenario.series.forecast(state.t_min, self.scenario.controller.t_pred_min)

    def evaluate(
        self,
        state: PlantState,
        patterns: Sequence[PatternVec],
        forecast: Sequence[SeriesSample],
        memo: dict[PatternVec, Rollout] | None = None,
    ) -> list[Rollout]:
        """Roll out ``patterns`` in order, reusing and filling ``memo``."""
        memo = {} if memo is None else memo
        pending = [p for p in dict.fromkeys(patterns) if p not in memo]
        if pending:
            try:
                loop = asyncio.get_running_loop()
            except RuntimeError:
                loop = None

            if self.threads == 1 or (loop and loop.is_running()):
                results = [rollout(self.plant, state, p, forecast) for p in pending]
            else:
                results = asyncio.run(self._evaluate_async(state, pending, forecast))
            memo.update(zip(pending, results, strict=True))
        return [memo[p] for p in patterns]

    async def _evaluate_async(
        self,
        state: PlantState,
        patterns: Sequence[PatternVec],
        forecast: Sequence[SeriesSample],
    ) -> list[Rollout]:
        semaphore = asyncio.Semaphore(self.threads)

        async def rollout_task(pattern: PatternVec) -> Rollout:
            async with semaphore:
                return await asyncio.to_thread(rollout, self.plant, state, pattern, forecast)

        return list(await asyncio.gather(*(rollout_task(p) for p in patterns)))

    def _stage(
        self,
        k: int,
        stage: str,
        state: PlantState,
        patterns: Sequence[PatternVec],
        forecast: Sequence[SeriesSample],
        memo: dict[PatternVec, Rollout],
        objective: Callable[[ScoreBreakdown], float],
        plan: PlanResult,
    ) -> tuple[PatternVec, ScoreBreakdown] | None:
        before = len(memo)
        rollouts = self.evaluate(state, patterns, forecast, memo)
        plan.evaluated += len(memo) - before
        scores = [score_J(r, self.weights) for r in rollouts]
        values = [objective(s) for s in scores]
        if self.log_candidates:
            plan.candidates.extend(
                CandidateScore(k, stage, p, s, v)
                for p, s, v in zip(patterns, scores, values, strict=True)
            )
        best = argmin(values)
        if best is None:
            return None
        logger.debug("Stage %s at k=%d: %s (%.6g)", stage, k, patterns[best], values[best])
        plan.stage_winners[stage] = patterns[best]
        return patterns[best], scores[best]

    def plan_step(self, k: int, state: PlantState) -> PlanResult:
        """Choose the word for slot ``k`` starting from ``state``."""
        started = time.perf_counter()
        forecast = self.forecast(state)
        if self.joint:
            plan = self._plan_joint(k, state, forecast)
        else:
            plan = self._plan_cascade(k, state, forecast)
        plan.wall_time_s = time.perf_counter() - started
        logger.info(
            "Slot %d (t=%.1f min): word %s, %d/%d rollouts, %.2f s",
            k,
            state.t_min,
            plan.word,
            plan.evaluated,
            plan.enumerated,
            plan.wall_time_s,
        )
        return plan

    def _fallback(self, k: int) -> PlanResult:
        logger.warning("No feasible pattern at slot %d; switching everything off", k)
        pattern = PatternVec.from_words([ALL_OFF] * self.horizon)
        return PlanResult(k, ALL_OFF, pattern, ScoreBreakdown.infeasible(), fallback=True)

    def _plan_cascade(
        self, k: int, state: PlantState, forecast: Sequence[SeriesSample]
    ) -> PlanResult:
        n = self.horizon
        memo: dict[PatternVec, Rollout] = {}
        default_pv = self.scenario.controller.stage_a_pv_dest
        plan = PlanResult(k, ALL_OFF, PatternVec((), (), ()), ScoreBreakdown())

        stage_a = [
            PatternVec.from_words([ControlWord.default_for(s, default_pv) for s in seq])
            for seq in switch_patterns(n)
        ]
        plan.enumerated += len(stage_a)
        found = self._stage(
            k, STAGE_SWITCH, state, stage_a, forecast, memo, lambda s: s.j_total, plan
        )
        if found is None:
            fallback = self._fallback(k)
            fallback.enumerated = plan.enumerated
            fallback.evaluated = plan.evaluated
            fallback.candidates = plan.candidates
            return fallback
        chosen, score = found
        switch_seq = chosen.switch_seq

        stage_b = [PatternVec(switch_seq, pv, chosen.battery_seq) for pv in pv_patterns(n)]
        plan.enumerated += len(stage_b)
        found = self._stage(k, STAGE_PV, state, stage_b, forecast, memo, lambda s: s.j_pv, plan)
        if found is None:
            logger.warning("No feasible PV routing at slot %d; keeping %s", k, chosen)
        else:
            chosen, score = found

        candidates = [PatternVec(switch_seq, chosen.pv_seq, b) for b in battery_patterns(n)]
        plan.enumerated += len(candidates)
        stage_c = [p for p in candidates if p.is_coupled()]
        found = self._stage(
            k, STAGE_BATTERY, state, stage_c, forecast, memo, lambda s: s.j_battery, plan
        )
        if found is None:
            logger.warning("No feasible battery routing at slot %d; keeping %s", k, chosen)
        else:
            chosen, score = found

        plan.pattern = chosen
        plan.score = score
        plan.word = chosen.words()[0]
        return plan

    def _plan_joint(
        self, k: int, state: PlantState, forecast: Sequence[SeriesSample]
    ) -> PlanResult:
        memo: dict[PatternVec, Rollout] = {}
        patterns = joint_patterns(self.horizon)
        plan = PlanResult(k, ALL_OFF, PatternVec((), (), ()), ScoreBreakdown())
        plan.enumerated = len(patterns)
        found = self._stage(
            k, STAGE_JOINT, state, patterns, forecast, memo, lambda s: s.j_total, plan
        )
        if found is None:
            fallback = self._fallback(k)
            fallback.enumerated = plan.enumerated
            fallback.evaluated = plan.evaluated
            return fallback
        plan.pattern, plan.score = found
        plan.word = plan.pattern.words()[0]
        return plan


@dataclass(frozen=True)
class TrajectoryRow:
    """One simulation step, sampled at its start."""

    t_min: float
    word: ControlWord
    battery_puh: float
    purchased_puh: float
    max_vdev_pu: float
    total_snow_mm: float


@dataclass
class ClosedLoopResult:
    scenario_name: str
    initial_battery_puh: float
    final_state: PlantState
    rows: list[TrajectoryRow] = field(default_factory=list)
    records: list[StepRecord] = field(default_factory=list)
    plans: list[PlanResult] = field(default_factory=list)
    ledger: ScoreBreakdown = field(default_factory=ScoreBreakdown)
    last_flow: CoupledFlow | None = None
    ref_amplitude_v: float = 1.0
    steps_per_slot: int = 1

    @property
    def slot_words(self) -> list[ControlWord]:
        n = self.steps_per_slot
        return [r.word for r in self.records[::n]]

    def slot_vdev_v(self) -> list[float]:
        """Per-slot maximum line voltage deviation in volts."""
        n = self.steps_per_slot
        return [
            max(r.vdev_pu for r in self.records[i : i + n]) * self.ref_amplitude_v
            for i in range(0, len(self.records), n)
        ]


@dataclass(frozen=True)
class RunReport:
    scenario: str
    duration_min: float
    purchased_energy_puh: float
    v_fluc_total_v: float
    final_snow_total_mm_m: float
    loss_w_min: float
    battery_final_puh: float
    battery_ledger_residual_puh: float
    slot_words: list[str]
    battery_trace_puh: list[float]
    wall_time_per_plan_step_s: list[float]

    @property
    def mean_plan_time_s(self) -> float:
        times = self.wall_time_per_plan_step_s
        return sum(times) / len(times) if times else 0.0

    @classmethod
    def from_result(cls, result: ClosedLoopResult, length_m: float) -> RunReport:
        state = result.final_state
        return cls(
            scenario=result.scenario_name,
            duration_min=state.t_min,
            purchased_energy_puh=state.purchased_puh,
            v_fluc_total_v=sum(result.slot_vdev_v()),
            final_snow_total_mm_m=state.snow_area(length_m),
            loss_w_min=state.loss_w_min,
            battery_final_puh=state.battery.energy,
            battery_ledger_residual_puh=state.battery.ledger_residual(result.initial_battery_puh),
            slot_words=[str(w) for w in result.slot_words],
            battery_trace_puh=[r.battery_puh for r in result.rows],
            wall_time_per_plan_step_s=[p.wall_time_s for p in result.plans],
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "duration_min": self.duration_min,
            "purchased_energy_puh": self.purchased_energy_puh,
            "v_fluc_total_v": self.v_fluc_total_v,
            "final_snow_total_mm_m": self.final_snow_total_mm_m,
            "loss_w_min": self.loss_w_min,
            "battery_final_puh": self.battery_final_puh,
            "battery_ledger_residual_puh": self.battery_ledger_residual_puh,
            "slot_words": self.slot_words,
            "battery_trace_puh": self.battery_trace_puh,
            "wall_time_per_plan_step_s": self.wall_time_per_plan_step_s,
            "mean_plan_time_s": self.mean_plan_time_s,
        }


def parse_schedule(text: str) -> list[int]:
    """``"1,1,0,2"`` -> switch index per slot."""
    try:
        schedule = [int(part) for part in text.replace(" ", "").split(",") if part]
    except ValueError as e:
        raise ConfigError(f"schedule must be comma-separated switch indices: {text!r}") from e
    bad = [s for s in schedule if s not in (0, 1, 2)]
    if bad:
        raise ConfigError(f"schedule switch indices must be 0, 1 or 2, got {bad}")
    return schedule


def run_closed_loop(
    scenario: Scenario,
    duration_min: float | None = None,
    planner: Planner | None = None,
    schedule: Sequence[int] | None = None,
    progress_callback: Callable[[int, int], None] | None = None,
) -> ClosedLoopResult:
    """Alternate planning and plant advance slot by slot.

    With ``schedule`` the switch index of every slot is fixed (PV to the line,
    coupled battery routing) and nothing is planned.

    Raises:
        ConfigError: the duration is not a whole number of slots, exceeds the
            series, or does not match the schedule length.
    """
    ctrl = scenario.controller
    duration = scenario.duration_min if duration_min is None else duration_min
    slots_f = duration / ctrl.t_mini_min
    if duration < 0 or abs(slots_f - round(slots_f)) > 1e-9:
        raise ConfigError(
            f"duration {duration} min is not a multiple of t_mini_min={ctrl.t_mini_min}"
        )
    if duration > scenario.duration_min + 1e-9:
        raise ConfigError(
            f"duration {duration} min exceeds the scenario series ({scenario.duration_min} min)"
        )
    slots = round(slots_f)
    if schedule is not None and len(schedule) != slots:
        raise ConfigError(f"schedule has {len(schedule)} entries for {slots} slots")

    planner = planner or Planner(scenario)
    plant = planner.plant
    steps = scenario.schema.steps_per_slot
    state = plant.initial_state()
    result = ClosedLoopResult(
        scenario_name=scenario.name,
        initial_battery_puh=state.battery.energy,
        final_state=state,
        ref_amplitude_v=scenario.grid.ref_amplitude_v,
        steps_per_slot=steps,
    )

    for k in range(slots):
        if schedule is not None:
            word = ControlWord.default_for(schedule[k])
            if word not in plant.feasible_words(state.battery):
                logger.warning("Scheduled word %s infeasible at slot %d; switching off", word, k)
                word = ALL_OFF
        else:
            plan = planner.plan_step(k, state)
            result.plans.append(plan)
            word = plan.word

        result.last_flow, _ = plant.flows(word, scenario.series.sample_at(state.t_min))
        for _ in range(steps):
            step_start = state
            state = plant.advance(state, word, scenario.series.sample_at(state.t_min))
            record = state.last_step
            assert record is not None
            result.records.append(record)
            result.rows.append(
                TrajectoryRow(
                    t_min=record.t_min,
                    word=word,
                    battery_puh=record.battery_puh,
                    purchased_puh=step_start.purchased_puh,
                    max_vdev_pu=record.vdev_pu,
                    total_snow_mm=record.snow_area_mm_m,
                )
            )
        if progress_callback:
            progress_callback(k + 1, slots)

    result.final_state = state
    result.ledger = score_J(
        Rollout(
            pattern=PatternVec.from_words(result.slot_words),
            records=tuple(result.records),
            steps_per_slot=steps,
            dt_min=plant.dt_s / 60.0,
            ref_amplitude_v=scenario.grid.ref_amplitude_v,
            zeta_guard=ctrl.zeta_guard_puh,
        ),
        ctrl.weights,
    )
    logger.info(
        "Closed loop %s: %d slots, purchased %.4f p.u.h, battery %.4f p.u.h",
        scenario.name,
        slots,
        state.purchased_puh,
        state.battery.energy,
    )
    return result


__all__ = [
    "CandidateScore",
    "ClosedLoopResult",
    "PatternVec",
    "PlanResult",
    "Planner",
    "Rollout",
    "RunReport",
    "ScoreBreakdown",
    "TrajectoryRow",
    "argmin",
    "joint_patterns",
    "parse_schedule",
    "rollout",
    "run_closed_loop",
    "score_J",
    "score_J_battery",
    "score_J_pv",
]
