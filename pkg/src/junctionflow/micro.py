"""Follow-the-leader traffic on the 2:1 junction with a periodic light.

Positions ``X`` and times are unscaled (vehicle units); the empirical
density lives in scaled variables ``x = eps X``, ``t_scaled = eps t``.

Road labels follow the junction convention: a vehicle is on road 0 exactly
when ``X >= 0``, otherwise it keeps its incoming label 1 or 2. Road 1 has the
green light on ``[nT, nT + T1)`` and road 2 on ``[nT + T1, (n+1)T)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConsistencyError, DomainError, InvalidParameterError
from .flux import FluxModel
from .pwc import PiecewiseConstant, total_variation

NO_LEADER = -1
# relative slack on spacing comparisons against e_min (roundoff in positions)
GAP_RTOL = 1e-9


@dataclass
class MicroState:
    t: float
    X: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.r = np.asarray(self.r, dtype=int)
        if self.X.shape != self.r.shape or self.X.ndim != 1:
            raise InvalidParameterError("X and r must be 1-d arrays of equal length")

    @property
    def N(self) -> int:
        return self.X.size

    def copy(self) -> "MicroState":
        return MicroState(self.t, self.X.copy(), self.r.copy())

    def check(self) -> None:
        """Raise if the labelling or no-collision invariant fails."""
        if np.any(np.isin(self.r, (0, 1, 2), invert=True)):
            raise ConsistencyError("road labels must be 0, 1 or 2")
        if np.any((self.r == 0) != (self.X >= 0)):
            raise ConsistencyError("label 0 must coincide with X >= 0")
        for k in (0, 1, 2):
            xs = np.sort(self.X[self.r == k])
            if np.any(np.diff(xs) <= 0):
                raise ConsistencyError(f"collision on road {k}")


@dataclass(frozen=True)
class LightSchedule:
    """Unscaled light: period ``T``, road 1 green for the first ``T1``."""

    T: float
    T1: float

    def __post_init__(self):
        if not (0.0 < self.T1 < self.T):
            raise InvalidParameterError(f"need 0 < T1 < T, got T={self.T}, T1={self.T1}")

    @property
    def theta(self) -> float:
        return self.T1 / self.T

    @classmethod
    def from_scaled(cls, period: float, theta: float, epsilon: float) -> "LightSchedule":
        """Light whose scaled period ``eps T`` equals ``period``."""
        T = period / epsilon
        return cls(T, theta * T)

    @classmethod
    def from_exponent(cls, alpha: float, theta: float, epsilon: float) -> "LightSchedule":
        """``T = eps^-alpha`` and ``T1 = theta T``."""
        T = epsilon ** (-alpha)
        return cls(T, theta * T)

    def green_road(self, t: float) -> int:
        phase = t - math.floor(t / self.T) * self.T
        if self.T - phase <= 1e-12 * self.T:
            return 1
        return 1 if phase < self.T1 * (1 - 1e-12) else 2

    def next_switch(self, t: float) -> float:
        n = math.floor(t / self.T)
        for cand in (n * self.T + self.T1, (n + 1) * self.T, (n + 1) * self.T + self.T1):
            if cand > t * (1 + 1e-14) + 1e-14:
                return cand
        return (n + 2) * self.T


def switch_count(epsilon: float, T: float) -> int:
    """Number of light periods in unit scaled time, ``ceil(1 / (eps T))``."""
    return math.ceil(1.0 / (epsilon * T) - 1e-12)


# -- leaders and velocities -------------------------------------------------

def leader_indices(s: MicroState) -> np.ndarray:
    """Index of the vehicle ahead of each vehicle, ``NO_LEADER`` if none.

    Vehicles on road 1 see roads 1 and 0, vehicles on road 2 see roads 2 and
    0, vehicles on road 0 see road 0 only (which is everything ahead of them).
    """
    sigma = np.full(s.N, NO_LEADER, dtype=int)
    for k in (1, 2):
        idx = np.nonzero((s.r == k) | (s.r == 0))[0]
        if idx.size < 2:
            continue
        order = idx[np.argsort(s.X[idx], kind="stable")]
        behind, ahead = order[:-1], order[1:]
        # road-0 vehicles get their leader from the first pass
        sel = slice(None) if k == 1 else s.r[behind] == 2
        sigma[behind[sel]] = ahead[sel]
    return sigma


def leader_index(s: MicroState, i: int) -> int | None:
    j = int(leader_indices(s)[i])
    return None if j == NO_LEADER else j


def velocities(s: MicroState, light: LightSchedule, m: FluxModel,
               sigma: np.ndarray | None = None) -> np.ndarray:
    """Right-hand side of the follow-the-leader system at time ``s.t``."""
    if sigma is None:
        sigma = leader_indices(s)
    has = sigma != NO_LEADER
    gaps = np.where(has, s.X[np.where(has, sigma, 0)] - s.X, np.inf)
    vel = np.full(s.N, m.V_max)
    if np.any(has):
        vel[has] = m.V(gaps[has])
    red = 2 if light.green_road(s.t) == 1 else 1
    leader_across = ~has | (s.X[np.where(has, sigma, 0)] >= 0)
    stopped = (s.r == red) & leader_across
    if np.any(stopped):
        vel[stopped] = m.V(np.maximum(-s.X[stopped], 0.0))
    return vel


def velocity(s: MicroState, i: int, light: LightSchedule, m: FluxModel) -> float:
    return float(velocities(s, light, m)[i])


def max_time_step(m: FluxModel) -> float:
    """Largest Euler step that cannot produce overtaking."""
    return min(0.5 * m.e_min / m.V_max, 0.5 / m.lipschitz_V)


def step(s: MicroState, light: LightSchedule, m: FluxModel, dt: float) -> MicroState:
    """Explicit Euler step with velocities frozen at the step start.

    The caller keeps ``dt`` from straddling a light switch (``simulate`` does).
    """
    if dt <= 0:
        raise InvalidParameterError("dt must be positive")
    if dt > max_time_step(m) * (1 + 1e-12):
        raise InvalidParameterError(f"dt={dt} exceeds the anti-overtaking bound {max_time_step(m)}")
    sigma = leader_indices(s)
    vel = velocities(s, light, m, sigma)
    X = s.X + dt * vel
    r = np.where(X >= 0, 0, s.r)
    has = sigma != NO_LEADER
    if np.any(X[sigma[has]] <= X[has]):
        raise ConsistencyError("overtaking detected; time step too large")
    out = MicroState(s.t + dt, X, r)
    out.check()
    return out


# -- initial data -----------------------------------------------------------

def _inverse_cdf(segments, masses: np.ndarray) -> np.ndarray:
    segs = sorted((float(a), float(b), float(v)) for a, b, v in segments if b > a and v > 0)
    cum = 0.0
    out = np.empty_like(masses)
    filled = np.zeros(masses.shape, dtype=bool)
    for a, b, v in segs:
        seg_mass = (b - a) * v
        sel = (~filled) & (masses <= cum + seg_mass)
        out[sel] = a + (masses[sel] - cum) / v
        filled |= sel
        cum += seg_mass
    if not np.all(filled):
        out[~filled] = segs[-1][1]
    return out


def init_from_density(profiles: Sequence[Sequence], epsilon: float, m: FluxModel) -> MicroState:
    """Place vehicles so each scaled gap carries mass ``eps``.

    ``profiles[k]`` lists ``(a, b, value)`` segments in scaled coordinates on
    branch ``k`` (``x < 0`` for roads 1 and 2, ``x >= 0`` for road 0). A
    branch of mass ``M`` gets ``ceil(M / eps)`` vehicles placed at cumulative
    masses ``s, s + eps, ...`` with ``s`` centring the chain in the profile.
    """
    if epsilon <= 0:
        raise InvalidParameterError("epsilon must be positive")
    X, r = [], []
    for k, segs in enumerate(profiles):
        for a, b, val in segs:
            if val < 0 or val > m.rho_max * (1 + 1e-12):
                raise DomainError(f"branch {k}: density {val} outside [0, rho_max]")
            if b < a:
                raise DomainError(f"branch {k}: segment ({a}, {b}) reversed")
            if k == 0 and a < 0:
                raise DomainError("road 0 profile must lie in x >= 0")
            if k > 0 and b > 0:
                raise DomainError(f"road {k} profile must lie in x < 0")
        mass = sum((b - a) * v for a, b, v in segs if b > a)
        if mass <= 0:
            continue
        n = math.ceil(mass / epsilon - 1e-9)
        offset = 0.5 * (mass - (n - 1) * epsilon)
        x = _inverse_cdf(segs, offset + epsilon * np.arange(n))
        X.append(x / epsilon)
        r.append(np.full(n, k))
    if not X:
        return MicroState(0.0, np.zeros(0), np.zeros(0, dtype=int))
    X = np.concatenate(X)
    r = np.concatenate(r)
    r = np.where(X >= 0, 0, r)
    s = MicroState(0.0, X, r)
    s.check()
    return s


# -- empirical density and diagnostics --------------------------------------

@dataclass
class EmpiricalDensity:
    """Scaled piecewise-constant density of one snapshot, per road label.

    ``branch[k]`` collects the intervals ``[x_i, x_leader)`` of vehicles
    labelled ``k``; the last interval of an incoming road may reach past the
    junction. ``x`` and ``r`` are the scaled positions and labels.
    """

    epsilon: float
    branch: tuple
    x: np.ndarray
    r: np.ndarray

    def network(self) -> tuple:
        """Density per branch on its own half-line.

        Incoming-road mass lying at ``x >= 0`` is attributed to road 0; the
        products of road 0 and road ``k`` densities vanish, so this is a sum
        of disjoint pieces.
        """
        b0, b1, b2 = self.branch
        far = 1.0 + max([abs(v) for pw in self.branch if not pw.is_empty for v in pw.edges[[0, -1]]] or [0.0])
        road0 = b0 + b1.restrict(0.0, far) + b2.restrict(0.0, far)
        return (road0.restrict(0.0, far), b1.restrict(-far, 0.0), b2.restrict(-far, 0.0))


def empirical_density(s: MicroState, epsilon: float, sigma: np.ndarray | None = None) -> EmpiricalDensity:
    if sigma is None:
        sigma = leader_indices(s)
    x = epsilon * s.X
    parts = []
    for k in (0, 1, 2):
        sel = (s.r == k) & (sigma != NO_LEADER)
        lo = x[sel]
        hi = x[sigma[sel]]
        vals = 1.0 / (s.X[sigma[sel]] - s.X[sel])
        parts.append(PiecewiseConstant.from_intervals(lo, hi, vals))
    return EmpiricalDensity(epsilon, tuple(parts), x, s.r.copy())


def tv_of_velocity(rho: PiecewiseConstant, m: FluxModel) -> float:
    """Total variation of ``v(rho)``, including the jumps to ``v(0)`` at the ends."""
    if rho.is_empty:
        return 0.0
    keep = np.diff(rho.edges) > 0
    vals = np.clip(rho.values[keep], 0.0, m.rho_max)
    return total_variation(np.asarray(m.v(vals)), m.V_max)


def tv_diagnostic(d: EmpiricalDensity, green: int, m: FluxModel) -> float:
    """Variation with the green road glued to road 0 and the red road cut at its front vehicle."""
    red = 2 if green == 1 else 1
    line = d.branch[green] + d.branch[0]
    tv = tv_of_velocity(line, m)
    on_red = d.r == red
    if np.any(on_red):
        front = float(np.max(d.x[on_red]))
        tv += tv_of_velocity(d.branch[red].restrict(-np.inf, front), m)
    return tv


def tv_whole_system_scale(epsilon: float, light: LightSchedule) -> float:
    """``1 + eps^-1 max(1/T1, 1/(T - T1))``, the growth factor of the system bound."""
    return 1.0 + max(1.0 / light.T1, 1.0 / (light.T - light.T1)) / epsilon


@dataclass
class DensityChecks:
    """Per-snapshot bounds on the empirical density near and away from the junction.

    ``gap_violations`` counts spacings below ``e_min`` other than the pair
    straddling the junction.
    """

    gap_violations: int = 0
    sup_violations: int = 0
    mass_violations: int = 0
    max_window_mass: float = 0.0
    max_outside_density: float = 0.0

    @property
    def ok(self) -> bool:
        return self.gap_violations == 0 and self.sup_violations == 0 and self.mass_violations == 0

    def to_dict(self) -> dict:
        return dict(self.__dict__, ok=self.ok)


def check_snapshot(s: MicroState, d: EmpiricalDensity, sigma: np.ndarray, m: FluxModel,
                   checks: DensityChecks) -> None:
    eps = d.epsilon
    has = sigma != NO_LEADER
    gaps = s.X[sigma[has]] - s.X[has]
    short = gaps < m.e_min * (1 - GAP_RTOL)
    if np.any(short):
        Xi = s.X[has][short]
        Xl = s.X[sigma[has]][short]
        checks.gap_violations += int(np.sum(~((Xi < 0) & (Xl >= 0))))
    w = eps * m.e_min
    cap = m.rho_max * (1 + GAP_RTOL)
    for k, pw in enumerate(d.branch):
        if pw.is_empty:
            continue
        lo, hi = pw.edges[:-1], pw.edges[1:]
        big = pw.values > cap
        if k == 0:
            checks.sup_violations += int(np.sum(big))
            outside_vals = pw.values
        else:
            inside = (lo >= -w * (1 + GAP_RTOL)) & (hi <= w * (1 + GAP_RTOL))
            checks.sup_violations += int(np.sum(big & ~inside))
            outside_vals = pw.values[~inside]
            mass = float(np.sum(pw.values * np.clip(np.minimum(hi, w) - np.maximum(lo, -w), 0.0, None)))
            checks.max_window_mass = max(checks.max_window_mass, mass)
            if mass > 3 * eps * (1 + 1e-9):
                checks.mass_violations += 1
        if outside_vals.size:
            checks.max_outside_density = max(checks.max_outside_density, float(outside_vals.max()))


# -- full runs --------------------------------------------------------------

@dataclass
class MicroRun:
    epsilon: float
    light: LightSchedule
    times: np.ndarray
    states: list
    densities: list
    tv: np.ndarray
    green: np.ndarray
    checks: DensityChecks
    steps: int
    vehicle_count_constant: bool
    final: MicroState = field(repr=False)

    def network_densities(self) -> list:
        return [d.network() for d in self.densities]


def simulate(m: FluxModel, state: MicroState, light: LightSchedule, epsilon: float, t_end: float,
             snapshot_times: Sequence[float] | None = None, dt: float | None = None,
             strict: bool = False) -> MicroRun:
    """Integrate up to scaled time ``t_end``; snapshot times are scaled too.

    Steps are cut at light switches and at snapshot instants. Every snapshot
    is checked against the density bounds; with ``strict`` a failure raises.
    """
    if epsilon <= 0:
        raise InvalidParameterError("epsilon must be positive")
    dt_max = max_time_step(m) if dt is None else float(dt)
    if dt_max > max_time_step(m) * (1 + 1e-12):
        raise InvalidParameterError("dt exceeds the anti-overtaking bound")
    state.check()
    horizon = t_end / epsilon
    snaps = sorted(set(float(t) for t in (snapshot_times if snapshot_times is not None else [0.0, t_end])))
    snaps_unscaled = [t / epsilon for t in snaps if 0.0 <= t <= t_end + 1e-12]
    checks = DensityChecks()
    times, states, dens, tvs, greens = [], [], [], [], []
    s = state.copy()
    n0 = s.N
    si = 0
    steps = 0
    while True:
        while si < len(snaps_unscaled) and snaps_unscaled[si] <= s.t * (1 + 1e-13) + 1e-12:
            sigma = leader_indices(s)
            d = empirical_density(s, epsilon, sigma)
            check_snapshot(s, d, sigma, m, checks)
            if strict and not checks.ok:
                raise ConsistencyError(f"density bound violated at t={s.t * epsilon}: {checks.to_dict()}")
            g = light.green_road(s.t)
            times.append(snaps_unscaled[si] * epsilon)
            states.append(s.copy())
            dens.append(d)
            tvs.append(tv_diagnostic(d, g, m))
            greens.append(g)
            si += 1
        if s.t >= horizon * (1 - 1e-13) - 1e-12:
            break
        target = min(horizon, light.next_switch(s.t))
        if si < len(snaps_unscaled):
            target = min(target, snaps_unscaled[si])
        h = min(dt_max, target - s.t)
        if target - (s.t + h) < 1e-9 * dt_max:
            h = target - s.t
        if h <= 0:
            break
        t_old = s.t
        s = step(s, light, m, h) if s.N else MicroState(t_old + h, s.X, s.r)
        if h == target - t_old:
            s.t = target
        steps += 1
    return MicroRun(epsilon, light, np.asarray(times), states, dens, np.asarray(tvs),
                    np.asarray(greens), checks, steps, s.N == n0, s)
