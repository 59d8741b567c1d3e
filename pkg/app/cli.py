"""Command-line interface for roadheat."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING, NoReturn

import click

from app.config.settings import ScenarioSettings
from app.core.comparison import ComparisonProgress, ScenarioComparison
from app.core.controller import Planner, RunReport, parse_schedule, run_closed_loop
from app.core.errors import ConfigError, PowerFlowError, RoadHeatError
from app.core.exporter import TrajectoryExporter
from app.core.oracles import enumeration_oracle, heat_oracle, ladder_oracle, toy_scenario
from app.core.scenario import load_scenario
from app.utils.cache import ProfileCache
from app.utils.logging import set_verbosity, setup_logging

if TYPE_CHECKING:
    from app.core.oracles import OracleResult

logger = logging.getLogger(__name__)

EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_ORACLE = 3


def _fail(error: Exception) -> NoReturn:
    """Report ``error`` on stderr and exit with its code."""
    if isinstance(error, PowerFlowError | FloatingPointError | ZeroDivisionError):
        code = EXIT_NUMERICAL
    else:
        code = EXIT_CONFIG
    click.echo(f"Error: {error}", err=True)
    sys.exit(code)


def _load_settings(config: str) -> ScenarioSettings:
    """A config path, or the name of a bundled scenario."""
    path = Path(config)
    if path.exists() or path.suffix == ".json":
        return ScenarioSettings(config_path=path)
    return ScenarioSettings.bundled(config)


def _configure_logging(verbose: int) -> None:
    if verbose > 0:
        setup_logging(log_file=None, level=logging.DEBUG, console=True)
        set_verbosity(verbose)


def _progress_callback(completed: int, total: int) -> None:
    pct = int(completed / total * 100) if total else 100
    bar_len = 30
    filled = int(bar_len * completed / total) if total else bar_len
    bar = "█" * filled + "░" * (bar_len - filled)
    print(f"\r  [{bar}] {pct}% ({completed}/{total})", end="", flush=True, file=sys.stderr)
    if completed == total:
        print(file=sys.stderr, flush=True)


def _format_report(report: RunReport, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2)

    lines = [
        f"Scenario:            {report.scenario}",
        f"Duration:            {report.duration_min:g} min",
        f"Purchased energy:    {report.purchased_energy_puh:.4f} p.u.h",
        f"Voltage fluctuation: {report.v_fluc_total_v:.4f} V (sum of slot maxima)",
        f"Final snow:          {report.final_snow_total_mm_m:.4f} mm.m",
        f"Distribution loss:   {report.loss_w_min:.6g} W.min",
        f"Battery:             {report.battery_final_puh:.4f} p.u.h",
        f"Slot words:          {' '.join(report.slot_words) or '-'}",
    ]
    if report.wall_time_per_plan_step_s:
        lines.append(f"Plan step time:      {report.mean_plan_time_s:.3f} s (mean)")
    return "\n".join(lines)


@click.group(name="roadheat")
def cli() -> None:
    """roadheat: road-heating cable, PV and battery simulator with predictive switching."""


@cli.command(name="run")
@click.argument("config")
@click.option("--duration", type=float, default=None, help="Simulated minutes (default: scenario)")
@click.option("--no-battery", is_flag=True, default=False, help="Pin the battery (no storage)")
@click.option("--joint", is_flag=True, default=False, help="Enumerate joint word sequences")
@click.option("--threads", type=int, default=None, help="Parallel rollouts (default: all cores)")
@click.option("-o", "--out", "out_dir", type=str, default=None, help="Directory for CSV output")
@click.option(
    "--log-candidates", is_flag=True, default=False, help="Write every candidate's score"
)
@click.option(
    "--schedule",
    type=str,
    default=None,
    help='Open loop: switch index per slot, e.g. "1,1,0,2"',
)
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["text", "json"]),
    default="text",
    help="Report format",
)
@click.option("-v", "--verbose", count=True, help="-v info, -vv debug")
def cmd_run(
    config: str,
    duration: float | None,
    no_battery: bool,
    joint: bool,
    threads: int | None,
    out_dir: str | None,
    log_candidates: bool,
    schedule: str | None,
    fmt: str,
    verbose: int,
) -> None:
    """Run the closed loop on a scenario file or bundled scenario name."""
    _configure_logging(verbose)
    try:
        settings = _load_settings(config)
        if no_battery:
            settings = settings.without_battery()
        scenario = load_scenario(settings)
        schedule_list = parse_schedule(schedule) if schedule else None
        planner = Planner(
            scenario,
            threads=threads,
            joint=joint,
            cache=ProfileCache(),
            log_candidates=log_candidates,
        )
        click.echo(f"Running {scenario.name}", err=True)
        result = run_closed_loop(
            scenario,
            duration,
            planner,
            schedule=schedule_list,
            progress_callback=_progress_callback,
        )
    except (RoadHeatError, FloatingPointError, ZeroDivisionError) as e:
        _fail(e)

    report = RunReport.from_result(result, scenario.grid.line_length_m)
    if out_dir:
        try:
            written = TrajectoryExporter.export(
                result, report, out_dir, scenario.grid.line_length_m, log_candidates
            )
        except OSError as e:
            _fail(ConfigError(f"cannot write output: {e}", out_dir))
        click.echo(f"Wrote {len(written)} file(s) to {out_dir}", err=True)

    click.echo(_format_report(report, fmt))


def _echo_oracle(results: list[OracleResult], fmt: str) -> None:
    if fmt == "json":
        payload = [
            {
                "name": r.name,
                "max_error": r.max_error,
                "threshold": r.threshold,
                "passed": r.passed,
                "detail": r.detail,
            }
            for r in results
        ]
        click.echo(json.dumps(payload, indent=2))
        return
    for r in results:
        verdict = "PASS" if r.passed else "FAIL"
        click.echo(f"{verdict}  {r.name}: max error {r.max_error:.3e} (threshold {r.threshold:g})")
        if r.detail:
            click.echo(f"      {r.detail}")


@cli.command(name="oracle")
@click.argument("name", type=click.Choice(["ladder", "heat", "enumeration"]))
@click.option(
    "--size",
    type=int,
    default=None,
    help="ladder: ladder cells; heat: depth nodes; enumeration: horizon slots",
)
@click.option("--config", "config", type=str, default=None, help="Scenario supplying parameters")
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["text", "json"]),
    default="text",
    help="Output format",
)
@click.option("-v", "--verbose", count=True, help="-v info, -vv debug")
def cmd_oracle(name: str, size: int | None, config: str | None, fmt: str, verbose: int) -> None:
    """Check a solver against its brute-force reference."""
    _configure_logging(verbose)
    try:
        schema = _load_settings(config).schema if config else ScenarioSettings().schema
        if name == "ladder":
            results = ladder_oracle(schema.grid, schema.numerics, ladder_cells=size)
        elif name == "heat":
            results = heat_oracle(schema.thermal, size or schema.numerics.depth_nodes)
        else:
            results = enumeration_oracle(toy_scenario(horizon_slots=size or 2))
    except ValueError as e:
        _fail(ConfigError(str(e)))
    except (RoadHeatError, FloatingPointError, ZeroDivisionError) as e:
        _fail(e)

    _echo_oracle(results, fmt)
    if not all(r.passed for r in results):
        sys.exit(EXIT_ORACLE)


@cli.command(name="compare")
@click.argument("configs", nargs=-1, required=True)
@click.option(
    "--with-no-battery",
    is_flag=True,
    default=False,
    help="Add each scenario's no-battery twin",
)
@click.option("--duration", type=float, default=None, help="Simulated minutes (default: scenario)")
@click.option("--threads", type=int, default=None, help="Parallel rollouts (default: all cores)")
@click.option("-o", "--out", "out_dir", type=str, default=None, help="Directory for CSV output")
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["text", "json"]),
    default="text",
    help="Output format",
)
@click.option("-v", "--verbose", count=True, help="-v info, -vv debug")
def cmd_compare(
    configs: tuple[str, ...],
    with_no_battery: bool,
    duration: float | None,
    threads: int | None,
    out_dir: str | None,
    fmt: str,
    verbose: int,
) -> None:
    """Run scenario variants side by side."""
    _configure_logging(verbose)
    try:
        scenarios = [load_scenario(_load_settings(c)) for c in configs]
    except RoadHeatError as e:
        _fail(e)

    comparison = ScenarioComparison(threads=threads, cache=ProfileCache())
    variants = comparison.expand(scenarios, with_no_battery)
    if len(variants) < 2:
        click.echo("Error: compare needs at least two variants", err=True)
        sys.exit(EXIT_CONFIG)

    def compare_progress(progress: ComparisonProgress) -> None:
        idx = progress.current_index + 1
        if progress.completed:
            click.echo("  ✓ Done", err=True)
        else:
            click.echo(f"[{idx}/{progress.total}] {progress.current_label}", err=True)

    report = comparison.compare(scenarios, with_no_battery, duration, compare_progress)
    table = report.table()
    differences = report.differences()

    if out_dir:
        written = TrajectoryExporter.write_comparison(table, differences, out_dir)
        click.echo(f"Wrote {len(written)} file(s) to {out_dir}", err=True)

    if fmt == "json":
        click.echo(json.dumps({"variants": table, "differences": differences}, indent=2))
    else:
        for row in table:
            if "error" in row:
                click.echo(f"  FAILED: {row['variant']}: {row['error']}")
                continue
            click.echo(
                f"  {row['variant']}: purchased {row['purchased_puh']:.4f} p.u.h, "
                f"V_fluc {row['v_fluc_total_v']:.4f} V, snow {row['final_snow_mm_m']:.4f} mm.m"
            )
        for label, series in differences.items():
            click.echo(f"  {label}: " + " ".join(f"{d:+.4f}" for d in series))

    failed = [v for v in report.variants if not v.success]
    if failed:
        sys.exit(EXIT_NUMERICAL)


@cli.command(name="config")
@click.argument("config", required=False, default=None)
@click.option("--list", "list_bundled", is_flag=True, default=False, help="List bundled scenarios")
def cmd_config(config: str | None, list_bundled: bool) -> None:
    """Show a validated scenario config with every default filled in."""
    if list_bundled:
        for name in ScenarioSettings.available():
            click.echo(name)
        return
    try:
        settings = _load_settings(config) if config else ScenarioSettings()
    except RoadHeatError as e:
        _fail(e)
    click.echo(json.dumps(settings.to_dict(), indent=2, ensure_ascii=False))


# Command aliases mapping
_ALIASES: dict[str, str] = {
    "r": "run",
    "o": "oracle",
    "cmp": "compare",
    "c": "config",
}


def run_cli(argv: list[str] | None = None) -> None:
    """Entry point for CLI. Supports aliases."""
    args = argv if argv is not None else sys.argv[1:]

    if args and args[0] in _ALIASES:
        args = [_ALIASES[args[0]]] + list(args[1:])

    if not args:
        ctx = click.Context(cli)
        click.echo(cli.get_help(ctx))
        sys.exit(0)

    cli(args, standalone_mode=False)
