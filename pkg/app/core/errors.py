"""Exception hierarchy for scenario loading, power flow and control."""

from __future__ import annotations

from pathlib import Path


class RoadHeatError(Exception):
    """Base class for all simulator errors."""


class ConfigError(RoadHeatError):
    def __init__(self, message: str, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        prefix = f"{self.path}: " if self.path is not None else ""
        super().__init__(f"{prefix}{message}")


class SeriesError(RoadHeatError):
    """Raised for unusable time-series input."""


class SeriesParseError(SeriesError):
    def __init__(self, line: int, message: str, source: str = "") -> None:
        self.line = line
        where = f"{source}:" if source else "line "
        super().__init__(f"{where}{line}: {message}")


class NonMonotoneSeriesError(SeriesError):
    def __init__(self, line: int, source: str = "") -> None:
        self.line = line
        where = f"{source}:" if source else "line "
        super().__init__(f"{where}{line}: time is not strictly increasing")


class ExtrapolationError(SeriesError):
    """The requested window lies outside the series support."""


class PowerFlowError(RoadHeatError):
    """Raised when a voltage profile cannot be computed."""


class NoConvergenceError(PowerFlowError):
    def __init__(self, residual: float, iterations: int, solver: str = "Shooting") -> None:
        self.residual = residual
        self.iterations = iterations
        self.solver = solver
        super().__init__(
            f"{solver} did not converge after {iterations} iterations "
            f"(last residual {residual:.3e})"
        )


class VoltageCollapseError(PowerFlowError):
    def __init__(self, position: float) -> None:
        self.position = position
        super().__init__(f"Voltage amplitude collapsed near x={position:.4f} p.u.")


class ControlWordError(RoadHeatError, ValueError):
    """A control word violates its sum-to-one or coupling constraints."""
