"""Voltage profiles along the distribution line and the heating cable.

Each conductor is described by four states over normalised length x in [0, 1]:
phase ``theta``, amplitude ``v``, supplemental variable ``s`` and gradient ``w``::

    theta' = -s / v**2
    v'     = w
    s'     = (b p - g q) / (g**2 + b**2)
    w'     = s**2 / v**3 - (g p + b q) / ((g**2 + b**2) v)

with injection densities ``p``, ``q`` (p.u. per p.u. length). Point devices are
one-cell top-hats, so the right-hand side is constant inside every cell and a
fixed-step RK4 per cell keeps fourth-order accuracy. Boundary value problems
are closed by shooting from the end whose flow is known.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from app.core.errors import NoConvergenceError, VoltageCollapseError

if TYPE_CHECKING:
    from collections.abc import Callable

    from numpy.typing import NDArray

    from app.config.schema import GridParams, NumericsParams
    from app.core.plant import ControlWord
    from app.utils.cache import ProfileCache

logger = logging.getLogger(__name__)

V_MIN = 1e-6
_MIN_DAMPING = 1.0 / 1024.0


@dataclass(frozen=True)
class Conductor:
    """Series admittance per unit length, ``y = g - jb``."""

    g: float
    b: float
    loss_factor: float = 1.0
    name: str = ""

    @property
    def denominator(self) -> float:
        return self.g * self.g + self.b * self.b


@dataclass(frozen=True)
class Injection:
    """Active/reactive power injected around ``position`` (p.u. length).

    Without ``width`` the injection fills the grid cell that contains
    ``position``; with ``width`` it spreads uniformly over
    ``[position, position + width]``, moved back to end at 1 when it would
    overhang the conductor.
    """

    position: float
    active: float
    reactive: float = 0.0
    width: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.position <= 1.0:
            raise ValueError(f"Injection position {self.position!r} outside [0, 1]")
        if self.width is not None and self.width <= 0:
            raise ValueError(f"Injection width must be > 0, got {self.width!r}")


@dataclass(frozen=True)
class InjectionMap:
    entries: tuple[Injection, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def add(self, injection: Injection) -> InjectionMap:
        return InjectionMap((*self.entries, injection))

    @property
    def total_active(self) -> float:
        return float(sum(e.active for e in self.entries))

    def densities(self, cells: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Cell-wise constant densities whose integrals equal the device powers."""
        p = np.zeros(cells)
        q = np.zeros(cells)
        edges = np.linspace(0.0, 1.0, cells + 1)
        for entry in self.entries:
            if entry.width is None:
                cell = min(int(np.floor(entry.position * cells + 1e-9)), cells - 1)
                p[cell] += entry.active * cells
                q[cell] += entry.reactive * cells
                continue
            lo = max(0.0, min(entry.position, 1.0 - entry.width))
            hi = min(1.0, lo + entry.width)
            overlap = np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, None)
            share = overlap / overlap.sum()
            p += entry.active * share * cells
            q += entry.reactive * share * cells
        return p, q


@dataclass(frozen=True)
class BoundarySpec:
    """Two scalar conditions per end: a fixed voltage ``(theta, v)`` or a fixed flow ``(s, w)``."""

    head: tuple[float, float] | None = None
    tail: tuple[float, float] | None = None
    head_flow: tuple[float, float] | None = None
    tail_flow: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        for end, voltage, flow in (
            ("head", self.head, self.head_flow),
            ("tail", self.tail, self.tail_flow),
        ):
            if (voltage is None) == (flow is None):
                raise ValueError(
                    f"Boundary at the {end} must fix exactly one of (theta, v) or (s, w)"
                )
        if self.head is None and self.tail is None:
            raise ValueError("Boundary fixes flows at both ends; no voltage reference")

    @classmethod
    def feeder(cls, theta: float, v: float) -> BoundarySpec:
        """Voltage fixed at the head, open (zero-flow) tail."""
        return cls(head=(theta, v), tail_flow=(0.0, 0.0))

    @classmethod
    def reverse_feeder(cls, theta: float, v: float) -> BoundarySpec:
        """Open head, voltage fixed at the tail."""
        return cls(head_flow=(0.0, 0.0), tail=(theta, v))

    @classmethod
    def both_voltages(cls, head: tuple[float, float], tail: tuple[float, float]) -> BoundarySpec:
        return cls(head=head, tail=tail)


@dataclass(frozen=True)
class VoltageProfile:
    x: NDArray[np.float64]
    theta: NDArray[np.float64]
    v: NDArray[np.float64]
    s: NDArray[np.float64]
    w: NDArray[np.float64]
    loss_density: NDArray[np.float64]
    conductor: Conductor | None = None
    p_density: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    q_density: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    energized: bool = True
    iterations: int = 0
    residual: float = 0.0

    @classmethod
    def de_energized(cls, cells: int) -> VoltageProfile:
        zeros = np.zeros(cells + 1)
        return cls(
            x=np.linspace(0.0, 1.0, cells + 1),
            theta=zeros,
            v=zeros,
            s=zeros,
            w=zeros,
            loss_density=zeros,
            p_density=np.zeros(cells),
            q_density=np.zeros(cells),
            energized=False,
        )

    @property
    def cells(self) -> int:
        return int(self.x.size - 1)

    def active_flow(self) -> NDArray[np.float64]:
        """Active power flowing in +x at every node (p.u.)."""
        if not self.energized or self.conductor is None:
            return np.zeros_like(self.x)
        return self.conductor.b * self.s - self.conductor.g * self.v * self.w

    def total_loss(self) -> float:
        """Integrated Joule loss (p.u.) from the active-power balance.

        ``P(0) - P(1) + integral(p)`` equals ``integral(Gamma)`` exactly for the
        ODE model, unlike nodal quadrature across a top-hat edge.
        """
        if not self.energized or self.conductor is None:
            return 0.0
        flow = self.active_flow()
        injected = float(self.p_density.sum()) / self.cells
        return self.conductor.loss_factor * (float(flow[0] - flow[-1]) + injected)

    def max_deviation(self, reference: float) -> float:
        if not self.energized:
            return 0.0
        return float(np.max(np.abs(self.v - reference)))


def _joule(
    g: float, v: NDArray[np.float64], s: NDArray[np.float64], w: NDArray[np.float64]
) -> NDArray[np.float64]:
    if np.any(v <= 0):
        raise ZeroDivisionError("loss density needs a strictly positive amplitude")
    return g * (w * w + (s * s) / (v * v))


def loss_density_line(profile: VoltageProfile, g_e: float) -> NDArray[np.float64]:
    """Per-node loss of the three-phase line, ``3 g_e (w^2 + s^2/v^2)``."""
    if not profile.energized:
        return np.zeros_like(profile.x)
    return 3.0 * _joule(g_e, profile.v, profile.s, profile.w)


def loss_density_cable(profile: VoltageProfile, g_h: float) -> NDArray[np.float64]:
    """Per-node Joule heat of the heating cable, ``g_h (w^2 + s^2/v^2)``; zero when off."""
    if not profile.energized:
        return np.zeros_like(profile.x)
    return _joule(g_h, profile.v, profile.s, profile.w)


class _Integrator:
    """Cell-wise RK4 over a bundle of trajectories (states shaped ``(4, k)``)."""

    def __init__(
        self, conductor: Conductor, p: NDArray[np.float64], q: NDArray[np.float64]
    ) -> None:
        d = conductor.denominator
        self.cells = p.size
        self.h = 1.0 / self.cells
        self.ds = (conductor.b * p - conductor.g * q) / d
        self.cw = (conductor.g * p + conductor.b * q) / d

    @staticmethod
    def _rhs(y: NDArray[np.float64], ds: float, cw: float) -> NDArray[np.float64]:
        _, v, s, w = y
        return np.stack((-s / (v * v), w, np.full_like(s, ds), s * s / (v * v * v) - cw / v))

    def run(self, start: NDArray[np.float64], forward: bool) -> NDArray[np.float64]:
        """Integrate from one end; returns node-ordered states ``(cells+1, 4, k)``."""
        out = np.empty((self.cells + 1, *start.shape))
        h = self.h if forward else -self.h
        order = range(self.cells) if forward else range(self.cells - 1, -1, -1)
        node = 0 if forward else self.cells
        out[node] = start
        y = start
        with np.errstate(all="ignore"):
            for cell in order:
                ds, cw = float(self.ds[cell]), float(self.cw[cell])
                k1 = self._rhs(y, ds, cw)
                k2 = self._rhs(y + 0.5 * h * k1, ds, cw)
                k3 = self._rhs(y + 0.5 * h * k2, ds, cw)
                k4 = self._rhs(y + h * k3, ds, cw)
                y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                node = cell + 1 if forward else cell
                out[node] = y
        return out


def _collapse_node(traj: NDArray[np.float64], forward: bool) -> int | None:
    """First node, in integration order, where the amplitude is unusable.

    ``traj`` holds node-ordered states ``(cells+1, 4)``.
    """
    v = traj[:, 1]
    bad = ~np.isfinite(traj).all(axis=1) | (v <= V_MIN)
    idx = np.flatnonzero(bad)
    if idx.size == 0:
        return None
    return int(idx[0]) if forward else int(idx[-1])


def _shoot_scalar(
    integrator: _Integrator,
    flow: tuple[float, float],
    target: float,
    forward: bool,
    tol: float,
    max_iterations: int,
) -> tuple[NDArray[np.float64], int, float]:
    """Find the unknown amplitude at the flow-fixed end so the far amplitude hits ``target``."""
    far = -1 if forward else 0

    def evaluate(u: float) -> tuple[float, float, NDArray[np.float64], int | None]:
        eps = 1e-7 * max(1.0, abs(u))
        start = np.array([[0.0, 0.0], [u, u + eps], [flow[0], flow[0]], [flow[1], flow[1]]])
        traj = integrator.run(start, forward)
        base = traj[:, :, 0]
        collapsed = _collapse_node(base, forward)
        r = float(base[far, 1] - target)
        r_eps = float(traj[far, 1, 1] - target)
        return r, (r_eps - r) / eps, base, collapsed

    u = target
    r, dr, base, collapsed = evaluate(u)
    if collapsed is not None:
        raise VoltageCollapseError(collapsed * integrator.h)
    scale = tol * max(1.0, abs(target))
    for iteration in range(max_iterations):
        if abs(r) <= scale:
            return base, iteration, abs(r)
        if dr == 0.0 or not np.isfinite(dr):
            raise NoConvergenceError(abs(r), iteration)
        step = -r / dr
        damping = 1.0
        while damping >= _MIN_DAMPING:
            trial = u + damping * step
            if trial > V_MIN:
                r_t, dr_t, base_t, collapsed_t = evaluate(trial)
                if collapsed_t is None and abs(r_t) < abs(r):
                    u, r, dr, base = trial, r_t, dr_t, base_t
                    break
            damping *= 0.5
        else:
            raise NoConvergenceError(abs(r), iteration + 1)
        logger.debug("shooting iteration %d: u=%.12g residual=%.3e", iteration + 1, u, abs(r))
    if abs(r) <= scale:
        return base, max_iterations, abs(r)
    raise NoConvergenceError(abs(r), max_iterations)


def _shoot_pair(
    integrator: _Integrator,
    head: tuple[float, float],
    tail: tuple[float, float],
    tol: float,
    max_iterations: int,
) -> tuple[NDArray[np.float64], int, float]:
    """Voltage fixed at both ends: Newton on the head flow ``(s0, w0)``."""
    theta0, v0 = head
    target = np.array(tail)

    def evaluate(
        z: NDArray[np.float64],
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], int | None]:
        eps = 1e-7 * max(1.0, float(np.max(np.abs(z))))
        start = np.array(
            [
                [theta0] * 3,
                [v0] * 3,
                [z[0], z[0] + eps, z[0]],
                [z[1], z[1], z[1] + eps],
            ]
        )
        traj = integrator.run(start, forward=True)
        base = traj[:, :, 0]
        r = traj[-1, :2, 0] - target
        jac = (traj[-1, :2, 1:] - traj[-1, :2, :1]) / eps
        return r, jac, base, _collapse_node(base, True)

    z = np.array([-(target[0] - theta0) * v0 * target[1], target[1] - v0])
    r, jac, base, collapsed = evaluate(z)
    if collapsed is not None:
        raise VoltageCollapseError(collapsed * integrator.h)
    scale = tol * max(1.0, float(np.max(np.abs(target))), abs(v0))
    for iteration in range(max_iterations):
        norm = float(np.max(np.abs(r)))
        if norm <= scale:
            return base, iteration, norm
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as e:
            raise NoConvergenceError(norm, iteration) from e
        damping = 1.0
        while damping >= _MIN_DAMPING:
            trial = z + damping * step
            r_t, jac_t, base_t, collapsed_t = evaluate(trial)
            if collapsed_t is None and float(np.max(np.abs(r_t))) < norm:
                z, r, jac, base = trial, r_t, jac_t, base_t
                break
            damping *= 0.5
        else:
            raise NoConvergenceError(norm, iteration + 1)
    norm = float(np.max(np.abs(r)))
    if norm <= scale:
        return base, max_iterations, norm
    raise NoConvergenceError(norm, max_iterations)


def solve_profile(
    conductor: Conductor,
    injections: InjectionMap,
    boundary: BoundarySpec,
    cells: int = 200,
    tol: float = 1e-10,
    max_iterations: int = 50,
) -> VoltageProfile:
    """Solve the four-state boundary value problem on ``cells`` uniform cells.

    Raises:
        NoConvergenceError: the shooting iteration stalled; carries the last residual.
        VoltageCollapseError: the amplitude reached zero along the conductor.
    """
    p, q = injections.densities(cells)
    integrator = _Integrator(conductor, p, q)

    if boundary.head is not None and boundary.tail is not None:
        states, iterations, residual = _shoot_pair(
            integrator, boundary.head, boundary.tail, tol, max_iterations
        )
    elif boundary.head is not None:
        assert boundary.tail_flow is not None
        states, iterations, residual = _shoot_scalar(
            integrator, boundary.tail_flow, boundary.head[1], False, tol, max_iterations
        )
        states = states.copy()
        states[:, 0] += boundary.head[0] - states[0, 0]
    else:
        assert boundary.tail is not None and boundary.head_flow is not None
        states, iterations, residual = _shoot_scalar(
            integrator, boundary.head_flow, boundary.tail[1], True, tol, max_iterations
        )
        states = states.copy()
        states[:, 0] += boundary.tail[0] - states[-1, 0]

    theta, v, s, w = (states[:, i].copy() for i in range(4))
    return VoltageProfile(
        x=np.linspace(0.0, 1.0, cells + 1),
        theta=theta,
        v=v,
        s=s,
        w=w,
        loss_density=conductor.loss_factor * _joule(conductor.g, v, s, w),
        conductor=conductor,
        p_density=p,
        q_density=q,
        iterations=iterations,
        residual=residual,
    )


def ode_residuals(profile: VoltageProfile) -> NDArray[np.float64]:
    """Centred-difference residuals of the four ODEs at interior nodes, shape ``(4, cells-1)``."""
    if profile.conductor is None:
        raise ValueError("profile carries no conductor")
    h = 1.0 / profile.cells
    c = profile.conductor
    p = 0.5 * (profile.p_density[:-1] + profile.p_density[1:])
    q = 0.5 * (profile.q_density[:-1] + profile.q_density[1:])
    v, s = profile.v[1:-1], profile.s[1:-1]
    d = c.denominator
    rhs = np.stack(
        (
            -s / v**2,
            profile.w[1:-1],
            (c.b * p - c.g * q) / d,
            s**2 / v**3 - (c.g * p + c.b * q) / (d * v),
        )
    )
    states = np.stack((profile.theta, profile.v, profile.s, profile.w))
    centred = (states[:, 2:] - states[:, :-2]) / (2.0 * h)
    return np.asarray(centred - rhs)


@dataclass(frozen=True)
class CoupledFlow:
    """Line and cable profiles for one control word at one instant."""

    line: VoltageProfile
    cable: VoltageProfile
    theta2: float
    v2: float


def line_conductor(grid: GridParams) -> Conductor:
    g, b = grid.line_admittance
    return Conductor(g, b, loss_factor=3.0, name="line")


def cable_conductor(grid: GridParams) -> Conductor:
    g, b = grid.cable_admittance
    return Conductor(g, b, loss_factor=1.0, name="cable")


def couple_line_and_cable(
    word: ControlWord,
    line_injections: InjectionMap,
    cable_injections: InjectionMap,
    grid: GridParams,
    numerics: NumericsParams,
    cache: ProfileCache | None = None,
) -> CoupledFlow:
    """Solve the line, then the cable under the active switch pattern.

    Switch 1 feeds the cable head from bifurcation point 1 (its draw is already
    part of ``line_injections``); Switch 2 feeds the cable tail from the
    battery at bifurcation point 2, leaving the line untouched.
    """
    solve: Callable[..., VoltageProfile] = cache.solve if cache is not None else solve_profile
    cells, tol, iters = numerics.cells, numerics.tolerance, numerics.max_iterations

    line = solve(
        line_conductor(grid),
        line_injections,
        BoundarySpec.feeder(grid.ref_phase_rad, 1.0),
        cells,
        tol,
        iters,
    )
    theta2, v2 = float(line.theta[-1]), float(line.v[-1])

    if word.switch == 1:
        boundary = BoundarySpec.feeder(grid.ref_phase_rad, 1.0)
    elif word.switch == 2:
        boundary = BoundarySpec.reverse_feeder(theta2, 1.0)
    else:
        return CoupledFlow(line, VoltageProfile.de_energized(cells), theta2, v2)

    cable = solve(cable_conductor(grid), cable_injections, boundary, cells, tol, iters)
    return CoupledFlow(line, cable, theta2, v2)
