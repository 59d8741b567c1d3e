"""Export closed-loop results to CSV and JSON."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

if TYPE_CHECKING:
    from app.core.controller import ClosedLoopResult, RunReport
    from app.core.powerflow import VoltageProfile
    from app.core.thermal import ThermalState

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"

TRAJECTORY_COLUMNS = [
    "t_min",
    "switch_index",
    "pv_dest",
    "battery_dest",
    "battery_puh",
    "purchased_puh",
    "max_vdev_pu",
    "total_snow_mm",
]
THERMAL_COLUMNS = ["x_m", "surf_C", "soil_top_C", "soil_bottom_C", "snow_mm"]
PROFILE_COLUMNS = ["x_m", "theta_rad", "v_pu", "s_pu", "w_pu", "gamma_pu"]
PLANNING_COLUMNS = ["k", "stage", "pattern", "J", "P_loss", "V_fluc", "S_snow", "M_cost"]


class TrajectoryExporter:
    """Writes the run artifacts with a fixed column order and number format.

    Identical results give byte-identical files.
    """

    @staticmethod
    def _write_csv(frame: pd.DataFrame, output_path: Path) -> Path:
        output_path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(output_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.info("Wrote %d rows to %s", len(frame), output_path)
        return output_path

    @staticmethod
    def trajectory_frame(result: ClosedLoopResult) -> pd.DataFrame:
        rows = [
            {
                "t_min": row.t_min,
                "switch_index": row.word.switch,
                "pv_dest": row.word.pv,
                "battery_dest": row.word.battery,
                "battery_puh": row.battery_puh,
                "purchased_puh": row.purchased_puh,
                "max_vdev_pu": row.max_vdev_pu,
                "total_snow_mm": row.total_snow_mm,
            }
            for row in result.rows
        ]
        return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)

    @staticmethod
    def thermal_frame(thermal: ThermalState, length_m: float) -> pd.DataFrame:
        nodes = thermal.snow.size
        return pd.DataFrame(
            {
                "x_m": np.linspace(0.0, length_m, nodes),
                "surf_C": thermal.surface_temperature,
                "soil_top_C": thermal.soil[:, 0],
                "soil_bottom_C": thermal.soil[:, -1],
                "snow_mm": thermal.snow,
            },
            columns=THERMAL_COLUMNS,
        )

    @staticmethod
    def profile_frame(profile: VoltageProfile, length_m: float) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "x_m": profile.x * length_m,
                "theta_rad": profile.theta,
                "v_pu": profile.v,
                "s_pu": profile.s,
                "w_pu": profile.w,
                "gamma_pu": profile.loss_density,
            },
            columns=PROFILE_COLUMNS,
        )

    @staticmethod
    def planning_frame(result: ClosedLoopResult) -> pd.DataFrame:
        rows = [c.to_row() for plan in result.plans for c in plan.candidates]
        return pd.DataFrame(rows, columns=PLANNING_COLUMNS)

    @staticmethod
    def write_report(report: RunReport, output_path: str | Path) -> Path:
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(report.to_dict(), f, indent=2)
            f.write("\n")
        return output_path

    @classmethod
    def export(
        cls,
        result: ClosedLoopResult,
        report: RunReport,
        output_dir: str | Path,
        length_m: float,
        log_candidates: bool = False,
    ) -> list[Path]:
        """Write every artifact of a run into ``output_dir``; returns the paths written."""
        out = Path(output_dir)
        written = [
            cls._write_csv(cls.trajectory_frame(result), out / "trajectory.csv"),
            cls._write_csv(
                cls.thermal_frame(result.final_state.thermal, length_m), out / "thermal.csv"
            ),
        ]
        if result.last_flow is not None:
            flow = result.last_flow
            written.append(
                cls._write_csv(cls.profile_frame(flow.line, length_m), out / "line_profile.csv")
            )
            written.append(
                cls._write_csv(cls.profile_frame(flow.cable, length_m), out / "cable_profile.csv")
            )
        if log_candidates:
            written.append(cls._write_csv(cls.planning_frame(result), out / "planning_log.csv"))
        written.append(cls.write_report(report, out / "report.json"))
        return written

    @staticmethod
    def comparison_frame(table: list[dict[str, Any]]) -> pd.DataFrame:
        return pd.DataFrame(table)

    @classmethod
    def write_comparison(
        cls,
        table: list[dict[str, Any]],
        differences: dict[str, list[float]],
        output_dir: str | Path,
    ) -> list[Path]:
        out = Path(output_dir)
        written = [cls._write_csv(cls.comparison_frame(table), out / "comparison.csv")]
        if differences:
            frame = pd.DataFrame(differences)
            frame.insert(0, "slot", range(len(frame)))
            written.append(cls._write_csv(frame, out / "vdev_difference.csv"))
        return written
