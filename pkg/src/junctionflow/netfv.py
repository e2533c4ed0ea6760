"""Godunov finite-volume solver for the conservation law on the 2:1 junction.

Branches 1 and 2 occupy ``[-L, 0)`` with cells ordered from the far end to
the junction; branch 0 occupies ``(0, L]`` with cells ordered from the
junction outward. All branches share the cell width ``dx`` and the junction
sits on a cell interface, so the coupling is a single interface flux per
branch.

Two junction couplings are provided: the time-switched one (the green road
and road 0 form one line, the red road faces a wall) and the homogenized one
(the Riemann solver of the averaged germ).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConsistencyError, DomainError, InvalidParameterError
from .flux import FluxModel
from .germ import GermParams
from .pwc import PiecewiseConstant

CONSERVATION_RTOL = 1e-12


# -- interface fluxes ------------------------------------------------------

def godunov_flux(m: FluxModel, rL, rR):
    """Demand/supply form of the Godunov flux for a concave flux."""
    return m._out(np.minimum(np.asarray(m.f_plus(rL)), np.asarray(m.f_minus(rR))))


def junction_flux_switching(m: FluxModel, green: int, p1, p2, p0):
    """Junction fluxes ``(F1, F2, F0)`` while road ``green`` has the green light."""
    if green not in (1, 2):
        raise InvalidParameterError(f"green road must be 1 or 2, got {green}")
    m.f(p1), m.f(p2)  # domain check of the red road too
    if green == 1:
        F = godunov_flux(m, p1, p0)
        return F, 0.0 * F, F
    F = godunov_flux(m, p2, p0)
    return 0.0 * F, F, F


def junction_flux_homogenized(m: FluxModel, g: GermParams, p1, p2, p0):
    """Riemann-solver fluxes ``(F1, F2, F0)`` of the averaged germ.

    Each incoming road is capped by its demand and by ``theta_k f_max``. When
    road 0 cannot absorb both capped demands, the supply is split: a road
    whose demand is below its share ``theta_k * supply`` sends its full
    demand and the other road takes the remainder, otherwise each road gets
    exactly its share.
    """
    _, t1, t2 = g.thetas
    d1 = np.asarray(m.f_plus(p1))
    d2 = np.asarray(m.f_plus(p2))
    s0 = np.asarray(m.f_minus(p0))
    c1 = np.minimum(d1, t1 * m.f_max)
    c2 = np.minimum(d2, t2 * m.f_max)
    congested = c1 + c2 > s0
    F1 = np.where(congested, np.minimum(c1, np.maximum(t1 * s0, s0 - c2)), c1)
    F2 = np.where(congested, np.minimum(c2, np.maximum(t2 * s0, s0 - c1)), c2)
    return m._out(F1), m._out(F2), m._out(F1 + F2)


# -- junction modes --------------------------------------------------------

@dataclass(frozen=True)
class Switching:
    """Periodic light in scaled time: road 1 green on ``[n P, n P + theta P)``."""

    period: float
    theta: float

    def __post_init__(self):
        if self.period <= 0:
            raise InvalidParameterError("light period must be positive")
        if not (0.0 < self.theta < 1.0):
            raise InvalidParameterError("theta must lie in (0, 1)")

    @property
    def green_duration(self) -> float:
        return self.theta * self.period

    def green_road(self, t: float) -> int:
        phase = t - np.floor(t / self.period) * self.period
        # snap roundoff at switch instants to the later phase
        if self.period - phase <= 1e-12 * self.period:
            return 1
        return 1 if phase < self.green_duration * (1 - 1e-12) else 2

    def next_switch(self, t: float) -> float:
        """First switch instant strictly after ``t``."""
        n = np.floor(t / self.period)
        for cand in (n * self.period + self.green_duration, (n + 1) * self.period,
                     (n + 1) * self.period + self.green_duration):
            if cand > t * (1 + 1e-14) + 1e-14:
                return float(cand)
        return float((n + 2) * self.period)


@dataclass(frozen=True)
class Homogenized:
    germ: GermParams


JunctionMode = Switching | Homogenized


# -- grid ------------------------------------------------------------------

@dataclass
class NetworkGrid:
    """Cell averages on the three branches.

    ``inflow`` gives the far-field demand (a flux in ``[0, f_max]``) feeding
    roads 1 and 2. ``outflow`` is the far-field supply at the end of road 0;
    ``None`` means free outflow (supply ``f_max``).
    """

    rho: list
    dx: float
    L: float
    inflow: tuple = (0.0, 0.0)
    outflow: float | None = None

    def __post_init__(self):
        if self.dx <= 0:
            raise InvalidParameterError("dx must be positive")
        self.rho = [np.asarray(r, dtype=float).copy() for r in self.rho]

    @property
    def ncells(self) -> int:
        return self.rho[0].size

    def centers(self, branch: int) -> np.ndarray:
        i = np.arange(self.rho[branch].size)
        if branch == 0:
            return (i + 0.5) * self.dx
        return -self.L + (i + 0.5) * self.dx

    def mass(self) -> float:
        return float(self.dx * sum(np.sum(r) for r in self.rho))

    def traces(self) -> tuple[float, float, float]:
        """Cell values adjacent to the junction, ordered ``(p0, p1, p2)``."""
        return float(self.rho[0][0]), float(self.rho[1][-1]), float(self.rho[2][-1])

    def to_density(self) -> tuple[PiecewiseConstant, PiecewiseConstant, PiecewiseConstant]:
        n = self.ncells
        edges0 = np.arange(n + 1) * self.dx
        edges_in = -self.L + np.arange(n + 1) * self.dx
        return (
            PiecewiseConstant(edges0, self.rho[0]),
            PiecewiseConstant(edges_in, self.rho[1]),
            PiecewiseConstant(edges_in, self.rho[2]),
        )

    def copy(self) -> "NetworkGrid":
        return NetworkGrid([r.copy() for r in self.rho], self.dx, self.L, self.inflow, self.outflow)


def cell_averages(segments: Sequence[Sequence[float]], edges: np.ndarray) -> np.ndarray:
    """Exact cell averages of piecewise-constant ``(a, b, value)`` segments."""
    out = np.zeros(edges.size - 1)
    lo, hi = edges[:-1], edges[1:]
    for a, b, val in segments:
        overlap = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
        out += val * overlap
    return out / np.diff(edges)


def make_grid(m: FluxModel, profiles: Sequence[Sequence], dx: float, L: float,
              inflow: tuple = (0.0, 0.0), outflow: float | None = None) -> NetworkGrid:
    """Grid initialized from per-branch ``(a, b, value)`` segments."""
    n = int(round(L / dx))
    if n < 1 or abs(n * dx - L) > 1e-9 * L:
        raise InvalidParameterError("L must be a positive multiple of dx")
    for k, segs in enumerate(profiles):
        for a, b, val in segs:
            if not (0.0 <= val <= m.rho_max):
                raise DomainError(f"branch {k}: density {val} outside [0, rho_max]")
    edges0 = np.arange(n + 1) * dx
    edges_in = -L + np.arange(n + 1) * dx
    rho = [cell_averages(profiles[0], edges0),
           cell_averages(profiles[1], edges_in),
           cell_averages(profiles[2], edges_in)]
    inflow = tuple(float(np.clip(q, 0.0, m.f_max)) for q in inflow)
    if outflow is not None:
        outflow = float(np.clip(outflow, 0.0, m.f_max))
    return NetworkGrid(rho, dx, L, inflow, outflow)


# -- time stepping ---------------------------------------------------------

@dataclass
class StepFluxes:
    F0: float
    F1: float
    F2: float
    inflow1: float
    inflow2: float
    outflow0: float

    @property
    def net_boundary(self) -> float:
        return self.inflow1 + self.inflow2 - self.outflow0


def junction_fluxes(grid: NetworkGrid, mode: JunctionMode, m: FluxModel, t: float):
    p0, p1, p2 = grid.traces()
    if isinstance(mode, Switching):
        return junction_flux_switching(m, mode.green_road(t), p1, p2, p0)
    return junction_flux_homogenized(m, mode.germ, p1, p2, p0)


def step_network(grid: NetworkGrid, mode: JunctionMode, m: FluxModel, dt: float,
                 t: float = 0.0) -> tuple[NetworkGrid, StepFluxes]:
    """One conservative Godunov step; the light phase is read at ``t``."""
    if dt <= 0:
        raise InvalidParameterError("dt must be positive")
    if dt > grid.dx / m.max_speed * (1 + 1e-12):
        raise InvalidParameterError(
            f"CFL violated: dt={dt} > dx/max|f'| = {grid.dx / m.max_speed}"
        )
    F1, F2, F0 = junction_fluxes(grid, mode, m, t)
    lam = dt / grid.dx
    new = []
    u0 = grid.rho[0]
    inner0 = godunov_flux(m, u0[:-1], u0[1:]) if u0.size > 1 else np.zeros(0)
    out0 = float(m.f_plus(u0[-1]))
    if grid.outflow is not None:
        out0 = min(out0, grid.outflow)
    fl0 = np.concatenate([[F0], np.atleast_1d(inner0), [out0]])
    new.append(u0 - lam * np.diff(fl0))
    ins = []
    for k, Fk in ((1, F1), (2, F2)):
        u = grid.rho[k]
        inner = godunov_flux(m, u[:-1], u[1:]) if u.size > 1 else np.zeros(0)
        qin = min(grid.inflow[k - 1], float(m.f_minus(u[0])))
        ins.append(qin)
        fl = np.concatenate([[qin], np.atleast_1d(inner), [Fk]])
        new.append(u - lam * np.diff(fl))
    slack = 1e-12 * m.rho_max
    for k, u in enumerate(new):
        if np.any(u < -slack) or np.any(u > m.rho_max + slack):
            raise ConsistencyError(f"maximum principle violated on branch {k}")
        np.clip(u, 0.0, m.rho_max, out=u)
    fluxes = StepFluxes(float(F0), float(F1), float(F2), ins[0], ins[1], out0)
    return NetworkGrid(new, grid.dx, grid.L, grid.inflow, grid.outflow), fluxes


# -- full runs -------------------------------------------------------------

@dataclass
class JunctionTrace:
    t: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    F0: np.ndarray
    F1: np.ndarray
    F2: np.ndarray

    def __len__(self) -> int:
        return self.t.size

    @property
    def points(self) -> np.ndarray:
        return np.stack([self.p0, self.p1, self.p2], axis=-1)


@dataclass
class MacroSolution:
    times: np.ndarray
    snapshots: list
    trace: JunctionTrace
    mass: np.ndarray
    max_conservation_error: float
    max_step_change: float
    steps: int
    grid: NetworkGrid = field(repr=False)

    def densities(self) -> list:
        return [g.to_density() for g in self.snapshots]


def solve(m: FluxModel, grid: NetworkGrid, mode: JunctionMode, t_end: float,
          snapshot_times: Sequence[float] | None = None, cfl: float = 0.9) -> MacroSolution:
    """Advance ``grid`` to ``t_end``.

    Steps are shortened so that none straddles a light switch or a requested
    snapshot time. The junction trace is sampled at the start of every step.
    """
    if not (0 < cfl <= 1):
        raise InvalidParameterError("cfl must lie in (0, 1]")
    if t_end < 0:
        raise InvalidParameterError("t_end must be nonnegative")
    dt_max = cfl * grid.dx / m.max_speed
    snaps = sorted(set(float(s) for s in (snapshot_times if snapshot_times is not None else [0.0, t_end])))
    snaps = [s for s in snaps if 0.0 <= s <= t_end + 1e-12]
    times, shots = [], []
    tr = {k: [] for k in ("t", "p0", "p1", "p2", "F0", "F1", "F2")}
    mass = [grid.mass()]
    worst_cons = 0.0
    worst_change = 0.0
    t = 0.0
    steps = 0
    si = 0
    g = grid.copy()
    while True:
        while si < len(snaps) and snaps[si] <= t + 1e-12:
            times.append(snaps[si])
            shots.append(g.copy())
            si += 1
        if t >= t_end - 1e-12:
            break
        target = t_end
        if si < len(snaps):
            target = min(target, snaps[si])
        if isinstance(mode, Switching):
            target = min(target, mode.next_switch(t))
        dt = min(dt_max, target - t)
        if target - (t + dt) < 1e-9 * dt_max:
            dt = target - t
        m_before = g.mass()
        new, fl = step_network(g, mode, m, dt, t)
        p0, p1, p2 = g.traces()
        for key, val in (("t", t), ("p0", p0), ("p1", p1), ("p2", p2),
                         ("F0", fl.F0), ("F1", fl.F1), ("F2", fl.F2)):
            tr[key].append(val)
        m_after = new.mass()
        err = abs(m_after - m_before - dt * fl.net_boundary)
        scale = max(m_before, m_after, 1e-300)
        worst_cons = max(worst_cons, err / scale if scale > 1e-300 else err)
        worst_change = max(worst_change, g.dx * sum(float(np.sum(np.abs(a - b))) for a, b in zip(new.rho, g.rho)))
        g = new
        mass.append(m_after)
        t = target if dt == target - t else t + dt
        steps += 1
    trace = JunctionTrace(**{k: np.asarray(v, dtype=float) for k, v in tr.items()})
    return MacroSolution(np.asarray(times), shots, trace, np.asarray(mass), worst_cons,
                         worst_change, steps, g)
