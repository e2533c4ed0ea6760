"""Experiment driver: L1 comparisons, TV bounds, entropy residuals, trace checks.

Network densities are triples of :class:`PiecewiseConstant`, one per branch,
in the junction coordinate (road 0 on ``x > 0``, roads 1 and 2 on ``x < 0``).
Space-time integrals treat a snapshot series as constant on each slab
``[t_j, t_{j+1})``, so every integral below is exact for the data it is given.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import flux as flux_mod
from . import micro, netfv
from .errors import DomainError, InvalidParameterError
from .flux import FluxModel
from .germ import GermParams, constraint_slacks, direct_margin
from .pwc import PiecewiseConstant
from .pwc import l1_distance as _l1_line

MODELS = ("micro", "meso", "homog")
SWEEPS = ("epsilon", "period")


# -- L1 distances -------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    """Space-time region ``[0, t_end] x {exclude < |x| <= reach}``."""

    t_end: float = 1.0
    exclude: float = 0.05
    reach: float = math.inf
    snapshots: int = 101

    def __post_init__(self):
        if self.t_end <= 0:
            raise InvalidParameterError("window t_end must be positive")
        if self.exclude < 0 or self.reach <= self.exclude:
            raise InvalidParameterError("need 0 <= exclude < reach")
        if self.snapshots < 2:
            raise InvalidParameterError("need at least 2 snapshots")

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.snapshots)


def l1_distance(a: Sequence[PiecewiseConstant], b: Sequence[PiecewiseConstant],
                exclude: float = 0.0, reach: float = math.inf) -> float:
    """Sum over branches of ``int |a - b|`` on ``exclude < |x| <= reach``."""
    if len(a) != len(b):
        raise DomainError("densities live on different networks")
    total = 0.0
    for k, (fa, fb) in enumerate(zip(a, b)):
        if k == 0:
            total += _l1_line(fa, fb, exclude, reach)
        else:
            total += _l1_line(fa, fb, -reach, -exclude)
    return total


def l1_spacetime(times: Sequence[float], a: Sequence, b: Sequence, window: Window | None = None,
                 times_b: Sequence[float] | None = None) -> float:
    """Left-endpoint slab integral of :func:`l1_distance` over the snapshot times."""
    window = window or Window()
    times = np.asarray(times, dtype=float)
    if times_b is not None and not np.array_equal(times, np.asarray(times_b, dtype=float)):
        raise DomainError("snapshot times of the two series differ")
    if len(a) != times.size or len(b) != times.size:
        raise DomainError("series length does not match the snapshot times")
    if times.size < 2:
        return 0.0
    widths = np.diff(times)
    vals = [l1_distance(a[j], b[j], window.exclude, window.reach) for j in range(times.size - 1)]
    return float(np.dot(widths, vals))


# -- entropy residual ---------------------------------------------------------

@dataclass(frozen=True)
class Hat:
    """``weight * h(t; tc, tw) * h(x; xc, xw)`` with ``h`` the unit tent of half-width ``w``."""

    tc: float
    tw: float
    xc: float
    xw: float
    weight: float = 1.0

    def __post_init__(self):
        if self.tw <= 0 or self.xw <= 0:
            raise InvalidParameterError("hat half-widths must be positive")
        if self.weight < 0:
            raise InvalidParameterError("hat weights must be nonnegative")

    def scaled(self, a: float) -> "Hat":
        return Hat(self.tc, self.tw, self.xc, self.xw, self.weight * a)


def _tent_antiderivative(s, c: float, w: float):
    s = np.asarray(s, dtype=float)
    u = np.clip(s - (c - w), 0.0, 2 * w)
    return np.where(u <= w, u * u / (2 * w), w - (2 * w - u) ** 2 / (2 * w))


def _tent(s, c: float, w: float):
    return np.clip(1.0 - np.abs(np.asarray(s, dtype=float) - c) / w, 0.0, None)


def hat_lattice(t_range: tuple[float, float], x_range: tuple[float, float],
                nt: int = 8, nx: int = 8) -> list[Hat]:
    """``nt * nx`` hats whose supports tile the given rectangle."""
    (t0, t1), (x0, x1) = t_range, x_range
    if t1 <= t0 or x1 <= x0 or nt < 1 or nx < 1:
        raise InvalidParameterError("empty hat lattice")
    ht = (t1 - t0) / (nt + 1)
    hx = (x1 - x0) / (nx + 1)
    return [Hat(t0 + (i + 1) * ht, ht, x0 + (j + 1) * hx, hx)
            for i in range(nt) for j in range(nx)]


def _single_residual(times, rho, m: FluxModel, k: float, h: Hat) -> float:
    lo, hi = h.xc - h.xw, h.xc + h.xw
    fk = m.f(k)
    total = 0.0
    ht = _tent(times, h.tc, h.tw)
    Ht = _tent_antiderivative(times, h.tc, h.tw)
    for j in range(times.size - 1):
        dphi = ht[j + 1] - ht[j]
        mass_t = Ht[j + 1] - Ht[j]
        if dphi == 0.0 and mass_t == 0.0:
            continue
        d = rho[j]
        pts = np.unique(np.concatenate([np.clip(d.edges, lo, hi), [lo, h.xc, hi]]))
        mids = 0.5 * (pts[:-1] + pts[1:])
        r = np.clip(d(mids), 0.0, m.rho_max)
        eta = np.abs(r - k)
        q = np.sign(r - k) * (np.asarray(m.f(r)) - fk)
        Hx = _tent_antiderivative(pts, h.xc, h.xw)
        # slope of the x-tent is +1/w left of the centre and -1/w right of it
        slope = np.where(mids < h.xc, 1.0 / h.xw, -1.0 / h.xw)
        total += dphi * float(np.dot(eta, np.diff(Hx))) + mass_t * float(np.dot(q * slope, np.diff(pts)))
    return h.weight * total


def entropy_residual(times: Sequence[float], rho: Sequence[PiecewiseConstant], m: FluxModel,
                     k: float, phi, epsilon: float, sup_tv: float,
                     junction: float | None = 0.0) -> tuple[float, float]:
    """Kruzhkov residual of a line density and its lower bound.

    ``phi`` is a :class:`Hat` or a list of hats (their sum). Returns
    ``(R, bound)`` with ``R = int int |rho - k| phi_t + q(rho) phi_x`` and
    ``bound = -eps * sup_tv * int ||phi_x||_inf dt``. For a sum of hats the
    bound uses the triangle inequality on ``||phi_x||_inf``.
    """
    hats = [phi] if isinstance(phi, Hat) else list(phi)
    if not hats:
        raise InvalidParameterError("empty test function")
    times = np.asarray(times, dtype=float)
    if times.size != len(rho):
        raise DomainError("series length does not match the snapshot times")
    m.f(k)
    for h in hats:
        if junction is not None and h.xc - h.xw <= junction <= h.xc + h.xw:
            raise DomainError("test function support touches the junction")
        if h.tc - h.tw < times[0] - 1e-12 or h.tc + h.tw > times[-1] + 1e-12:
            raise DomainError("test function support exceeds the recorded time span")
    R = sum(_single_residual(times, rho, m, k, h) for h in hats)
    bound = -epsilon * sup_tv * sum(h.weight * h.tw / h.xw for h in hats)
    return float(R), float(bound)


@dataclass
class EntropyRow:
    k: float
    hat: int
    residual: float
    bound: float
    passed: bool


@dataclass
class EntropyResidualReport:
    epsilon: float
    sup_tv: float
    slack: float
    rows: list = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def worst_margin(self) -> float:
        """Smallest ``residual - bound`` over all rows."""
        return min((r.residual - r.bound for r in self.rows), default=math.inf)

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "sup_tv": self.sup_tv, "slack": self.slack,
                "all_pass": self.all_pass, "worst_margin": self.worst_margin,
                "rows": [asdict(r) for r in self.rows]}


def entropy_check(times, rho, m: FluxModel, epsilon: float, sup_tv: float, hats: Sequence[Hat],
                  ks: Sequence[float] = (0.1, 0.25, 0.5, 0.75), slack: float = 1e-2,
                  junction: float | None = 0.0) -> EntropyResidualReport:
    """Evaluate the residual for every ``(k, hat)``; pass means ``R >= bound - slack |bound|``."""
    rep = EntropyResidualReport(epsilon, sup_tv, slack)
    for k in ks:
        for i, h in enumerate(hats):
            R, b = entropy_residual(times, rho, m, k, h, epsilon, sup_tv, junction)
            rep.rows.append(EntropyRow(float(k), i, R, b, R >= b - slack * abs(b)))
    return rep


# -- TV bounds ----------------------------------------------------------------

TV_KINDS = ("free-line", "stopped-line", "whole-system")


@dataclass
class TVReport:
    kind: str
    tol: float
    tv0: float
    tv_max: float
    limit: float | None
    worst_excess: float
    passed: bool
    scale: float | None = None
    ratio: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def tv_bound_check(times: Sequence[float], tv: Sequence[float], kind: str, m: FluxModel,
                   tol: float | None = None, epsilon: float | None = None,
                   light: micro.LightSchedule | None = None) -> TVReport:
    """Check a TV time series against the bound of the given kind.

    ``free-line``: no increase between any two snapshots beyond ``tol``.
    ``stopped-line``: ``TV(t) <= TV(0) + 4 V_max + tol``.
    ``whole-system``: only records ``max TV`` relative to the growth scale.
    """
    tv = np.asarray(tv, dtype=float)
    if tv.size == 0 or len(times) != tv.size:
        raise DomainError("missing or mismatched TV series")
    if kind not in TV_KINDS:
        raise InvalidParameterError(f"unknown TV check {kind!r}; choose from {TV_KINDS}")
    tv0, tv_max = float(tv[0]), float(tv.max())
    if kind == "free-line":
        tol = 1e-3 * m.V_max if tol is None else tol
        excess = float(np.max(tv - np.minimum.accumulate(tv)))
        return TVReport(kind, tol, tv0, tv_max, None, excess, excess <= tol)
    if kind == "stopped-line":
        tol = 0.05 * m.V_max if tol is None else tol
        limit = tv0 + 4 * m.V_max
        excess = tv_max - limit
        return TVReport(kind, tol, tv0, tv_max, limit, excess, excess <= tol)
    if epsilon is None or light is None:
        raise InvalidParameterError("whole-system check needs epsilon and the light schedule")
    scale = micro.tv_whole_system_scale(epsilon, light)
    return TVReport(kind, 0.0 if tol is None else tol, tv0, tv_max, None, 0.0, True,
                    scale, tv_max / scale)


# -- junction trace -----------------------------------------------------------

@dataclass
class GermTraceReport:
    samples: int
    passed: int
    tol: float
    burn_in: float
    worst_margin: float
    worst_point: list
    constraint_failures: dict
    constraint_worst: dict

    @property
    def pass_fraction(self) -> float:
        return self.passed / self.samples

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass_fraction"] = self.pass_fraction
        return d


def period_average(trace: netfv.JunctionTrace, period: float, t_end: float | None = None) -> np.ndarray:
    """Time averages of ``(p0, p1, p2)`` over each complete light period."""
    t = trace.t
    if t.size == 0:
        raise DomainError("empty trace")
    ends = np.append(t[1:], t[-1] if t_end is None else t_end)
    dur = ends - t
    idx = np.floor(t / period + 1e-9).astype(int)
    last = int(np.floor(ends[-1] / period + 1e-9))
    out = []
    for n in range(last):
        sel = idx == n
        w = dur[sel]
        if w.sum() <= 0:
            continue
        out.append(np.average(trace.points[sel], axis=0, weights=w))
    return np.asarray(out).reshape(-1, 3)


def germ_trace_check(trace: netfv.JunctionTrace, m: FluxModel, g: GermParams,
                     tol: float | None = None, burn_in: float = 0.2,
                     period: float | None = None, t_end: float | None = None) -> GermTraceReport:
    """Fraction of post-burn-in trace samples inside the germ.

    With ``period`` the trace is first averaged over whole light periods,
    and a period counts as post-burn-in when it starts at or after ``burn_in``.
    """
    if len(trace) == 0:
        raise DomainError("empty trace")
    tol = 1e-2 * m.f_max if tol is None else tol
    if period is not None:
        pts = period_average(trace, period, t_end)
        starts = period * np.arange(pts.shape[0])
        pts = pts[starts >= burn_in - 1e-12]
    else:
        pts = trace.points[trace.t >= burn_in - 1e-12]
    if pts.shape[0] == 0:
        raise DomainError("no trace samples after the burn-in")
    pts = np.clip(pts, 0.0, m.rho_max)
    margin = np.asarray(direct_margin(m, g, pts))
    ok = margin >= -tol
    slacks = constraint_slacks(m, g, pts)
    worst = int(np.argmin(margin))
    return GermTraceReport(
        samples=int(pts.shape[0]),
        passed=int(ok.sum()),
        tol=float(tol),
        burn_in=float(burn_in),
        worst_margin=float(margin[worst]),
        worst_point=pts[worst].tolist(),
        constraint_failures={k: int(np.sum(v < -tol)) for k, v in slacks.items()},
        constraint_worst={k: float(np.min(v)) for k, v in slacks.items()},
    )


# -- convergence studies ------------------------------------------------------

@dataclass(frozen=True)
class StudySetup:
    """Everything two models need to be run from the same datum."""

    flux: dict
    profiles: tuple
    theta: float
    window: Window = Window()
    dx: float = 0.002
    L: float = 2.5
    period: float | None = None
    alpha: float | None = None
    epsilon: float | None = None
    cfl: float = 0.9

    def light_period(self, epsilon: float | None) -> float:
        """Scaled light period; the exponent law ``eps^(1 - alpha)`` wins if set."""
        if self.alpha is not None:
            if epsilon is None:
                raise InvalidParameterError("exponent law needs epsilon")
            return epsilon ** (1.0 - self.alpha)
        if self.period is None:
            raise InvalidParameterError("no light period configured")
        return self.period


@dataclass
class ModelOutput:
    densities: list
    tv_max: float
    N: int
    checks: dict
    # worst relative mass change per step; for the particle model 1.0 if the vehicle count changed
    conservation: float


def run_model(kind: str, setup: StudySetup, epsilon: float | None, period: float | None) -> ModelOutput:
    """Run one model on the setup's datum and sample the window's snapshots."""
    m = flux_mod.from_dict(setup.flux)
    times = setup.window.times()
    if kind == "micro":
        if epsilon is None:
            raise InvalidParameterError("micro model needs epsilon")
        light = micro.LightSchedule.from_scaled(period, setup.theta, epsilon)
        state = micro.init_from_density(setup.profiles, epsilon, m)
        run = micro.simulate(m, state, light, epsilon, setup.window.t_end, times)
        return ModelOutput(run.network_densities(), float(run.tv.max()) if run.tv.size else 0.0,
                           state.N, run.checks.to_dict(), 0.0 if run.vehicle_count_constant else 1.0)
    if kind not in ("meso", "homog"):
        raise InvalidParameterError(f"unknown model {kind!r}; choose from {MODELS}")
    mode = netfv.Switching(period, setup.theta) if kind == "meso" else netfv.Homogenized(GermParams(setup.theta))
    grid = netfv.make_grid(m, setup.profiles, setup.dx, setup.L)
    sol = netfv.solve(m, grid, mode, setup.window.t_end, times, setup.cfl)
    tvs = [sum(micro.tv_of_velocity(p, m) for p in d) for d in sol.densities()]
    return ModelOutput(sol.densities(), float(max(tvs)), 0, {}, sol.max_conservation_error)


@dataclass
class ConvergenceRow:
    epsilon: float | None
    period: float | None
    N: int
    l1_error: float
    tv_max: float
    runtime: float
    checks: dict = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    scenario: str
    pair: tuple
    sweep: str
    rows: list = field(default_factory=list)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.l1_error for r in self.rows])

    def decreasing(self, slack: float = 0.0) -> bool:
        """Each error below its predecessor, up to a relative ``slack``."""
        e = self.errors
        return bool(np.all(e[1:] < e[:-1] * (1 + slack)))

    @property
    def ratio(self) -> float:
        e = self.errors
        return float(e[-1] / e[0]) if e.size and e[0] > 0 else 0.0

    def to_dict(self, timings: bool = False) -> dict:
        rows = []
        for r in self.rows:
            d = asdict(r)
            if not timings:
                d.pop("runtime")
            rows.append(d)
        return {"scenario": self.scenario, "pair": list(self.pair), "sweep": self.sweep,
                "decreasing": self.decreasing(), "ratio": self.ratio, "rows": rows}


def _sweep_member(pair, sweep, setup: StudySetup, value: float, cache_b) -> ConvergenceRow:
    start = time.perf_counter()
    eps = value if sweep == "epsilon" else setup.epsilon
    period = value if sweep == "period" else setup.light_period(eps)
    a = run_model(pair[0], setup, eps, period)
    b = cache_b if cache_b is not None else run_model(pair[1], setup, eps, period)
    times = setup.window.times()
    err = l1_spacetime(times, a.densities, b.densities, setup.window)
    checks = dict(a.checks or b.checks)
    macro = [o.conservation for o, k in zip((a, b), pair) if k != "micro"]
    if macro:
        checks["max_conservation_error"] = max(macro)
    if "micro" in pair:
        # for the particle model ``conservation`` flags a change in vehicle count
        checks["vehicle_count_constant"] = all(o.conservation == 0.0 for o, k in zip((a, b), pair) if k == "micro")
    return ConvergenceRow(eps, period, max(a.N, b.N), err, max(a.tv_max, b.tv_max),
                          time.perf_counter() - start, checks)


def _depends_on_sweep(kind: str, sweep: str, setup: StudySetup) -> bool:
    if kind == "homog":
        return False
    if kind == "meso":
        return sweep == "period" or setup.alpha is not None
    return True


def convergence_study(setup: StudySetup, pair: tuple[str, str], sweep: str,
                      values: Sequence[float], scenario: str = "", workers: int = 1) -> ConvergenceReport:
    """Compare two models across a decreasing sweep of ``epsilon`` or the light period.

    A model that does not depend on the swept value is run once and reused.
    With ``workers > 1`` sweep members run in separate processes.
    """
    if sweep not in SWEEPS:
        raise InvalidParameterError(f"unknown sweep {sweep!r}; choose from {SWEEPS}")
    if any(k not in MODELS for k in pair) or len(pair) != 2:
        raise InvalidParameterError(f"pair must name two of {MODELS}")
    values = [float(v) for v in values]
    if not values or any(b >= a for a, b in zip(values, values[1:])):
        raise InvalidParameterError("sweep values must be strictly decreasing")
    if sweep == "period" and "micro" in pair and setup.epsilon is None:
        raise InvalidParameterError("period sweep with the micro model needs a fixed epsilon")
    cache_b = None
    if not _depends_on_sweep(pair[1], sweep, setup):
        eps = setup.epsilon if sweep == "period" else None
        per = setup.period if setup.alpha is None else None
        cache_b = run_model(pair[1], setup, eps, per)
    report = ConvergenceReport(scenario, tuple(pair), sweep)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_sweep_member, pair, sweep, setup, v, cache_b) for v in values]
            report.rows = [f.result() for f in futs]
    else:
        report.rows = [_sweep_member(pair, sweep, setup, v, cache_b) for v in values]
    return report
