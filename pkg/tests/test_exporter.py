"""Tests for TrajectoryExporter."""

from __future__ import annotations

import json
from pathlib import Path

import pandas as pd
import pytest

from app.core.controller import ClosedLoopResult, Planner, RunReport, run_closed_loop
from app.core.exporter import (
    PLANNING_COLUMNS,
    PROFILE_COLUMNS,
    THERMAL_COLUMNS,
    TRAJECTORY_COLUMNS,
    TrajectoryExporter,
)
from app.core.scenario import Scenario
from app.utils.cache import ProfileCache


@pytest.fixture
def scheduled(small_scenario: Scenario) -> ClosedLoopResult:
    return run_closed_loop(small_scenario, schedule=[1, 2])


def _export(result: ClosedLoopResult, out: Path, log_candidates: bool = False) -> list[Path]:
    report = RunReport.from_result(result, 100.0)
    return TrajectoryExporter.export(result, report, out, 100.0, log_candidates=log_candidates)


class TestExport:
    def test_files_written(self, scheduled: ClosedLoopResult, tmp_path: Path) -> None:
        written = _export(scheduled, tmp_path / "run")
        assert [p.name for p in written] == [
            "trajectory.csv",
            "thermal.csv",
            "line_profile.csv",
            "cable_profile.csv",
            "report.json",
        ]
        assert all(p.exists() for p in written)

    def test_trajectory_columns_and_rows(
        self, scheduled: ClosedLoopResult, tmp_path: Path
    ) -> None:
        _export(scheduled, tmp_path)
        frame = pd.read_csv(tmp_path / "trajectory.csv")

        assert list(frame.columns) == TRAJECTORY_COLUMNS
        assert len(frame) == 40
        assert frame["t_min"].iloc[0] == 0.0
        assert frame["t_min"].iloc[-1] == pytest.approx(19.5)
        assert set(frame["switch_index"].iloc[:20]) == {1}
        assert set(frame["switch_index"].iloc[20:]) == {2}
        assert frame["purchased_puh"].is_monotonic_increasing

    def test_purchased_is_sampled_at_step_start(
        self, scheduled: ClosedLoopResult, tmp_path: Path
    ) -> None:
        _export(scheduled, tmp_path)
        frame = pd.read_csv(tmp_path / "trajectory.csv")
        assert frame["purchased_puh"].iloc[0] == 0.0
        assert frame["purchased_puh"].iloc[20] == pytest.approx(10.0 / 6.0)

    def test_thermal_snapshot(self, scheduled: ClosedLoopResult, tmp_path: Path) -> None:
        _export(scheduled, tmp_path)
        frame = pd.read_csv(tmp_path / "thermal.csv")
        assert list(frame.columns) == THERMAL_COLUMNS
        assert frame["x_m"].iloc[-1] == pytest.approx(100.0)
        assert (frame["snow_mm"] >= 0).all()

    def test_profiles(self, scheduled: ClosedLoopResult, tmp_path: Path) -> None:
        _export(scheduled, tmp_path)
        line = pd.read_csv(tmp_path / "line_profile.csv")
        cable = pd.read_csv(tmp_path / "cable_profile.csv")
        assert list(line.columns) == list(cable.columns) == PROFILE_COLUMNS
        assert len(line) == 51
        # last slot is battery-fed: cable energized from its tail
        assert cable["v_pu"].iloc[-1] == pytest.approx(1.0, abs=1e-9)

    def test_lf_line_endings(self, scheduled: ClosedLoopResult, tmp_path: Path) -> None:
        for path in _export(scheduled, tmp_path):
            assert b"\r\n" not in path.read_bytes()

    def test_byte_identical_reruns(self, small_scenario: Scenario, tmp_path: Path) -> None:
        first = _export(run_closed_loop(small_scenario, schedule=[1, 0]), tmp_path / "a")
        second = _export(run_closed_loop(small_scenario, schedule=[1, 0]), tmp_path / "b")
        for a, b in zip(first, second, strict=True):
            if a.suffix == ".csv":
                assert a.read_bytes() == b.read_bytes()

    def test_report(self, scheduled: ClosedLoopResult, tmp_path: Path) -> None:
        _export(scheduled, tmp_path)
        report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert report["scenario"] == "small"
        assert report["slot_words"] == ["110", "212"]
        assert report["purchased_energy_puh"] == pytest.approx(10.0 / 6.0)
        assert abs(report["battery_ledger_residual_puh"]) <= 1e-9

    def test_planning_log(self, small_scenario: Scenario, tmp_path: Path) -> None:
        planner = Planner(small_scenario, threads=1, cache=ProfileCache(), log_candidates=True)
        result = run_closed_loop(small_scenario, planner=planner)
        written = _export(result, tmp_path, log_candidates=True)

        assert tmp_path / "planning_log.csv" in written
        frame = pd.read_csv(tmp_path / "planning_log.csv")
        assert list(frame.columns) == PLANNING_COLUMNS
        assert set(frame["k"]) == {0, 1}

    def test_zero_duration_has_no_profiles(self, small_scenario: Scenario, tmp_path: Path) -> None:
        result = run_closed_loop(small_scenario, 0.0, Planner(small_scenario, threads=1))
        names = [p.name for p in _export(result, tmp_path)]
        assert "line_profile.csv" not in names
        assert pd.read_csv(tmp_path / "trajectory.csv").empty


class TestWriteComparison:
    def test_comparison_files(self, tmp_path: Path) -> None:
        table = [
            {"variant": "with_battery", "purchased_energy_puh": 1.0},
            {"variant": "no_battery", "purchased_energy_puh": 2.0},
        ]
        differences = {"no_battery": [0.5, -0.25]}
        written = TrajectoryExporter.write_comparison(table, differences, tmp_path)

        assert [p.name for p in written] == ["comparison.csv", "vdev_difference.csv"]
        frame = pd.read_csv(tmp_path / "vdev_difference.csv")
        assert list(frame.columns) == ["slot", "no_battery"]
        assert frame["no_battery"].tolist() == [0.5, -0.25]

    def test_no_differences(self, tmp_path: Path) -> None:
        written = TrajectoryExporter.write_comparison([{"variant": "a"}], {}, tmp_path)
        assert [p.name for p in written] == ["comparison.csv"]
