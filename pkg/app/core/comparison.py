"""Side-by-side closed-loop runs of several scenario variants."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

from app.core.controller import Planner, RunReport, run_closed_loop
from app.core.errors import RoadHeatError

logger = logging.getLogger(__name__)

if TYPE_CHECKING:
    from collections.abc import Callable

    from app.core.scenario import Scenario
    from app.utils.cache import ProfileCache


@dataclass
class VariantResult:
    label: str
    report: RunReport | None = None
    slot_vdev_v: list[float] = field(default_factory=list)
    success: bool = False
    error: str | None = None


@dataclass
class ComparisonProgress:
    current_index: int
    total: int
    current_label: str
    completed: bool = False


@dataclass
class ComparisonReport:
    variants: list[VariantResult]

    @property
    def succeeded(self) -> list[VariantResult]:
        return [v for v in self.variants if v.success]

    def table(self) -> list[dict[str, Any]]:
        rows = []
        for v in self.variants:
            if v.report is None:
                rows.append({"variant": v.label, "error": v.error})
                continue
            rows.append(
                {
                    "variant": v.label,
                    "purchased_puh": v.report.purchased_energy_puh,
                    "v_fluc_total_v": v.report.v_fluc_total_v,
                    "final_snow_mm_m": v.report.final_snow_total_mm_m,
                    "loss_w_min": v.report.loss_w_min,
                    "battery_final_puh": v.report.battery_final_puh,
                }
            )
        return rows

    def differences(self) -> dict[str, list[float]]:
        """Signed per-slot deviation of each variant minus the first successful one (V).

        Negative entries are slots where the variant kept the line closer to
        its reference voltage; no sign is assumed.
        """
        ok = self.succeeded
        if len(ok) < 2:
            return {}
        base = ok[0]
        out: dict[str, list[float]] = {}
        for v in ok[1:]:
            if len(v.slot_vdev_v) != len(base.slot_vdev_v):
                logger.warning(
                    "Variant %s has %d slots, %s has %d; no difference series",
                    v.label,
                    len(v.slot_vdev_v),
                    base.label,
                    len(base.slot_vdev_v),
                )
                continue
            out[f"{v.label}-{base.label}"] = [
                a - b for a, b in zip(v.slot_vdev_v, base.slot_vdev_v, strict=True)
            ]
        return out


class ScenarioComparison:
    def __init__(
        self,
        threads: int | None = None,
        joint: bool = False,
        cache: ProfileCache | None = None,
    ) -> None:
        self.threads = threads
        self.joint = joint
        self.cache = cache

    @staticmethod
    def expand(scenarios: list[Scenario], with_no_battery: bool = False) -> list[Scenario]:
        """Each scenario, followed by its no-battery twin when requested."""
        expanded: list[Scenario] = []
        for scenario in scenarios:
            expanded.append(scenario)
            if with_no_battery:
                expanded.append(scenario.without_battery())
        return expanded

    def run_variant(self, scenario: Scenario, duration_min: float | None = None) -> VariantResult:
        result = VariantResult(label=scenario.name)
        try:
            planner = Planner(scenario, threads=self.threads, joint=self.joint, cache=self.cache)
            loop = run_closed_loop(scenario, duration_min, planner)
            result.report = RunReport.from_result(loop, scenario.grid.line_length_m)
            result.slot_vdev_v = loop.slot_vdev_v()
            result.success = True
            logger.info(
                "Variant %s: purchased %.4f p.u.h",
                scenario.name,
                result.report.purchased_energy_puh,
            )
        except RoadHeatError as e:
            logger.error("Variant %s failed: %s", scenario.name, e)
            result.error = str(e)
        return result

    def compare(
        self,
        scenarios: list[Scenario],
        with_no_battery: bool = False,
        duration_min: float | None = None,
        progress_callback: Callable[[ComparisonProgress], None] | None = None,
    ) -> ComparisonReport:
        variants = self.expand(scenarios, with_no_battery)
        results: list[VariantResult] = []

        for i, scenario in enumerate(variants):
            if progress_callback:
                progress_callback(ComparisonProgress(i, len(variants), scenario.name))

            results.append(self.run_variant(scenario, duration_min))

            if progress_callback:
                progress_callback(
                    ComparisonProgress(i, len(variants), scenario.name, completed=True)
                )

        return ComparisonReport(results)
