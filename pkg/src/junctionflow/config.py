"""Scenario configuration: JSON schema, validation, and bundled presets.

A scenario is one JSON object. Every field is checked in a single pass and
all problems are reported together, each with its dotted field path.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

from . import flux as flux_mod
from .errors import JunctionFlowError, ScenarioError
from .germ import GermParams, gamma_point

SCHEMA_VERSION = 1
MODES = ("micro", "meso", "homog", "compare", "germ-check", "germ-brute", "tv-check", "entropy-check")
ROADS = ("road0", "road1", "road2")


@dataclass(frozen=True)
class LightConfig:
    """Scaled light period, or the exponent law ``T = eps^-alpha``."""

    period: float | None = None
    alpha: float | None = None


@dataclass(frozen=True)
class GridConfig:
    dx: float = 0.002
    L: float = 2.5
    cfl: float = 0.9


@dataclass(frozen=True)
class BoundaryConfig:
    inflow: tuple = (0.0, 0.0)
    outflow: float | None = None


@dataclass(frozen=True)
class CompareConfig:
    pair: tuple = ("micro", "meso")
    sweep: str = "epsilon"
    values: tuple = ()
    exclude: float = 0.05
    reach: float | None = None
    workers: int = 1


@dataclass(frozen=True)
class CheckConfig:
    germ_tol: float | None = None
    burn_in: float = 0.2
    trace_model: str = "homog"
    tv_kind: str = "free-line"
    tv_tol: float | None = None
    entropy_k: tuple = (0.1, 0.25, 0.5, 0.75)
    entropy_branch: int = 0
    hats: tuple = (8, 8)
    hat_t: tuple | None = None
    hat_x: tuple | None = None
    entropy_slack: float = 1e-2
    grid_step: float = 0.01
    gamma_samples: int = 200
    random_pairs: int = 10000
    pass_fraction: float = 0.95
    max_drift: float | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    mode: str
    flux: dict
    theta: float
    t_end: float
    profiles: tuple
    snapshots: int = 101
    epsilon: float | None = None
    light: LightConfig = LightConfig()
    dt: float | None = None
    grid: GridConfig = GridConfig()
    boundary: BoundaryConfig = BoundaryConfig()
    compare: CompareConfig = CompareConfig()
    checks: CheckConfig = CheckConfig()
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        d["profiles"] = {road: [list(s) for s in segs] for road, segs in zip(ROADS, self.profiles)}
        return _jsonable(d)

    @property
    def alpha_in_regime(self) -> bool | None:
        a = self.light.alpha
        return None if a is None else (2.0 / 3.0 < a < 1.0)

    def scaled_period(self, epsilon: float | None = None) -> float:
        eps = self.epsilon if epsilon is None else epsilon
        if self.light.alpha is not None:
            return eps ** (1.0 - self.light.alpha)
        return self.light.period


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


# -- validation ---------------------------------------------------------------

class _Issues:
    def __init__(self):
        self.items: list[tuple[str, str]] = []

    def add(self, path: str, msg: str) -> None:
        self.items.append((path, msg))

    def raise_if_any(self) -> None:
        if self.items:
            (path, msg), rest = self.items[0], self.items[1:]
            raise ScenarioError(path, "; ".join([msg] + [f"{p}: {m}" for p, m in rest]))


def _num(issues, d, key, path, default=None, *, required=False, positive=False, lo=None, hi=None,
         integer=False, nullable=True):
    if key not in d or d[key] is None:
        if required or (not nullable and default is None):
            issues.add(path, "is required")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        issues.add(path, f"must be a number, got {v!r}")
        return default
    if integer and int(v) != v:
        issues.add(path, f"must be an integer, got {v!r}")
        return default
    if not math.isfinite(v):
        issues.add(path, "must be finite")
        return default
    if positive and v <= 0:
        issues.add(path, f"must be positive, got {v}")
    if lo is not None and v < lo:
        issues.add(path, f"must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        issues.add(path, f"must be <= {hi}, got {v}")
    return int(v) if integer else float(v)


def _section(issues, d, key) -> dict:
    v = d.get(key, {})
    if v is None:
        return {}
    if not isinstance(v, dict):
        issues.add(key, "must be an object")
        return {}
    return v


def _unknown(issues, d, allowed, prefix=""):
    for k in d:
        if k not in allowed:
            issues.add(f"{prefix}{k}", "unknown field")


def parse_config(d: dict) -> ScenarioConfig:
    """Validate a scenario document and build the config."""
    issues = _Issues()
    if not isinstance(d, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    _unknown(issues, d, {"schema_version", "name", "mode", "flux", "theta", "t_end", "snapshots",
                         "profiles", "epsilon", "light", "dt", "grid", "boundary", "compare",
                         "checks", "seed"})
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        issues.add("schema_version", f"must be {SCHEMA_VERSION}, got {version!r}")
    name = d.get("name", "scenario")
    if not isinstance(name, str):
        issues.add("name", "must be a string")
        name = "scenario"
    mode = d.get("mode")
    if mode not in MODES:
        issues.add("mode", f"must be one of {', '.join(MODES)}; got {mode!r}")

    # flux
    fd = _section(issues, d, "flux")
    m = None
    try:
        m = flux_mod.from_dict(fd)
    except KeyError as exc:
        issues.add(f"flux.{exc.args[0]}", "is required")
    except (JunctionFlowError, TypeError, ValueError) as exc:
        issues.add("flux", str(exc))
    rho_max = m.rho_max if m else math.inf
    f_max = m.f_max if m else math.inf

    theta = _num(issues, d, "theta", "theta", 0.5)
    if theta is not None and not (0.0 < theta < 1.0):
        issues.add("theta", f"must lie in (0, 1), got {theta}")
    t_end = _num(issues, d, "t_end", "t_end", 1.0, positive=True)
    snapshots = _num(issues, d, "snapshots", "snapshots", 101, integer=True, lo=2)
    epsilon = _num(issues, d, "epsilon", "epsilon", None, positive=True)
    seed = _num(issues, d, "seed", "seed", 0, integer=True, lo=0)
    dt = _num(issues, d, "dt", "dt", None, positive=True)

    # profiles
    pd = _section(issues, d, "profiles")
    _unknown(issues, pd, set(ROADS), "profiles.")
    profiles = []
    for k, road in enumerate(ROADS):
        segs = pd.get(road, []) or []
        out = []
        if not isinstance(segs, list):
            issues.add(f"profiles.{road}", "must be a list of [a, b, value] segments")
            segs = []
        for i, seg in enumerate(segs):
            p = f"profiles.{road}[{i}]"
            if (not isinstance(seg, (list, tuple)) or len(seg) != 3
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in seg)):
                issues.add(p, "must be [a, b, value]")
                continue
            a, b, v = (float(x) for x in seg)
            if not all(math.isfinite(x) for x in (a, b, v)):
                issues.add(p, "must be finite")
                continue
            if b <= a:
                issues.add(p, f"needs a < b, got [{a}, {b}]")
            if not (0.0 <= v <= rho_max):
                issues.add(p, f"density {v} outside [0, rho_max={rho_max}]")
            if k == 0 and a < 0:
                issues.add(p, "road 0 segments must lie in x >= 0")
            if k > 0 and b > 0:
                issues.add(p, f"road {k} segments must lie in x <= 0")
            out.append((a, b, v))
        srt = sorted(out)
        for (a1, b1, _), (a2, b2, _) in zip(srt, srt[1:]):
            if a2 < b1:
                issues.add(f"profiles.{road}", f"segments [{a1}, {b1}] and [{a2}, {b2}] overlap")
        profiles.append(tuple(out))
    profiles = tuple(profiles)

    # light
    ld = _section(issues, d, "light")
    _unknown(issues, ld, {"period", "alpha"}, "light.")
    period = _num(issues, ld, "period", "light.period", None, positive=True)
    alpha = _num(issues, ld, "alpha", "light.alpha", None, positive=True)
    if period is not None and alpha is not None:
        issues.add("light", "give either period or alpha, not both")
    if alpha is not None and epsilon is None and mode in ("micro", "meso", "tv-check", "entropy-check"):
        issues.add("epsilon", "is required when the light follows the exponent law")
    light = LightConfig(period, alpha)

    # grid
    gd = _section(issues, d, "grid")
    _unknown(issues, gd, {"dx", "L", "cfl"}, "grid.")
    dx = _num(issues, gd, "dx", "grid.dx", 0.002, positive=True)
    L = _num(issues, gd, "L", "grid.L", 2.5, positive=True)
    cfl = _num(issues, gd, "cfl", "grid.cfl", 0.9, positive=True, hi=1.0)
    if dx and L and dx > 0 and L > 0:
        n = round(L / dx)
        if n < 1 or abs(n * dx - L) > 1e-9 * L:
            issues.add("grid.L", f"must be a positive multiple of grid.dx={dx}")
        reach = max([abs(x) for segs in profiles for s in segs for x in s[:2]] or [0.0])
        if mode in ("meso", "homog", "compare", "germ-check") and reach > L:
            issues.add("grid.L", f"must cover the initial profiles (reach {reach})")
    grid = GridConfig(dx, L, cfl)

    # boundary
    bd = _section(issues, d, "boundary")
    _unknown(issues, bd, {"inflow", "outflow"}, "boundary.")
    inflow = bd.get("inflow", [0.0, 0.0])
    if (not isinstance(inflow, (list, tuple)) or len(inflow) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in inflow)):
        issues.add("boundary.inflow", "must be [q1, q2]")
        inflow = (0.0, 0.0)
    else:
        for i, q in enumerate(inflow):
            if not (0.0 <= q <= f_max):
                issues.add(f"boundary.inflow[{i}]", f"must lie in [0, f_max={f_max}]")
        inflow = tuple(float(q) for q in inflow)
    outflow = _num(issues, bd, "outflow", "boundary.outflow", None, lo=0.0, hi=f_max)
    boundary = BoundaryConfig(inflow, outflow)

    # compare
    cd = _section(issues, d, "compare")
    _unknown(issues, cd, {"pair", "sweep", "values", "exclude", "reach", "workers"}, "compare.")
    pair = tuple(cd.get("pair", ("micro", "meso")))
    if len(pair) != 2 or any(p not in ("micro", "meso", "homog") for p in pair):
        issues.add("compare.pair", "must name two of micro, meso, homog")
    sweep = cd.get("sweep", "epsilon")
    if sweep not in ("epsilon", "period"):
        issues.add("compare.sweep", "must be epsilon or period")
    values = cd.get("values", [])
    if not isinstance(values, list) or not all(isinstance(v, (int, float)) and v > 0 for v in values):
        issues.add("compare.values", "must be a list of positive numbers")
        values = []
    elif any(b >= a for a, b in zip(values, values[1:])):
        issues.add("compare.values", "must be strictly decreasing")
    if mode == "compare" and not values:
        issues.add("compare.values", "is required in compare mode")
    exclude = _num(issues, cd, "exclude", "compare.exclude", 0.05, lo=0.0)
    reach = _num(issues, cd, "reach", "compare.reach", None, positive=True)
    workers = _num(issues, cd, "workers", "compare.workers", 1, integer=True, lo=1)
    compare = CompareConfig(pair, sweep, tuple(float(v) for v in values), exclude, reach, workers)

    # checks
    kd = _section(issues, d, "checks")
    _unknown(issues, kd, set(CheckConfig.__dataclass_fields__), "checks.")
    germ_tol = _num(issues, kd, "germ_tol", "checks.germ_tol", None, lo=0.0)
    burn_in = _num(issues, kd, "burn_in", "checks.burn_in", 0.2, lo=0.0)
    trace_model = kd.get("trace_model", "homog")
    if trace_model not in ("homog", "meso"):
        issues.add("checks.trace_model", "must be homog or meso")
    tv_kind = kd.get("tv_kind", "free-line")
    if tv_kind not in ("free-line", "stopped-line", "whole-system"):
        issues.add("checks.tv_kind", "must be free-line, stopped-line or whole-system")
    tv_tol = _num(issues, kd, "tv_tol", "checks.tv_tol", None, lo=0.0)
    ks = kd.get("entropy_k", [0.1, 0.25, 0.5, 0.75])
    if not isinstance(ks, list) or not all(isinstance(v, (int, float)) and 0 <= v <= rho_max for v in ks):
        issues.add("checks.entropy_k", "must be a list of densities in [0, rho_max]")
        ks = []
    branch = _num(issues, kd, "entropy_branch", "checks.entropy_branch", 0, integer=True, lo=0, hi=2)
    hats = kd.get("hats", [8, 8])
    if not isinstance(hats, list) or len(hats) != 2 or not all(isinstance(v, int) and v > 0 for v in hats):
        issues.add("checks.hats", "must be [nt, nx] with positive integers")
        hats = [8, 8]
    hat_t = _range(issues, kd, "hat_t")
    hat_x = _range(issues, kd, "hat_x")
    if hat_x is not None and hat_x[0] <= 0.0 <= hat_x[1]:
        issues.add("checks.hat_x", "test functions must stay away from the junction at x = 0")
    if hat_t is not None and t_end is not None and (hat_t[0] < 0 or hat_t[1] > t_end):
        issues.add("checks.hat_t", "must lie inside [0, t_end]")
    slack = _num(issues, kd, "entropy_slack", "checks.entropy_slack", 1e-2, lo=0.0)
    step = _num(issues, kd, "grid_step", "checks.grid_step", 0.01, positive=True)
    gcount = _num(issues, kd, "gamma_samples", "checks.gamma_samples", 200, integer=True, lo=2)
    pairs = _num(issues, kd, "random_pairs", "checks.random_pairs", 10000, integer=True, lo=0)
    frac = _num(issues, kd, "pass_fraction", "checks.pass_fraction", 0.95, lo=0.0, hi=1.0)
    drift = _num(issues, kd, "max_drift", "checks.max_drift", None, lo=0.0)
    checks = CheckConfig(germ_tol, burn_in, trace_model, tv_kind, tv_tol, tuple(float(k) for k in ks),
                         branch, tuple(hats), hat_t, hat_x, slack, step, gcount, pairs, frac, drift)

    # mode requirements
    needs_eps = mode in ("micro", "tv-check", "entropy-check") or (
        mode == "compare" and (sweep == "period" and "micro" in pair))
    if needs_eps and epsilon is None:
        issues.add("epsilon", f"is required in {mode} mode")
    needs_light = mode in ("micro", "meso", "tv-check", "entropy-check") or (
        mode == "germ-check" and trace_model == "meso") or (
        mode == "compare" and ("micro" in pair or "meso" in pair) and sweep == "epsilon")
    if needs_light and period is None and alpha is None:
        issues.add("light", "needs period or alpha in this mode")
    if mode == "compare" and sweep == "period" and alpha is not None:
        issues.add("light.alpha", "a period sweep sets the period directly")
    if dt is not None and m is not None:
        from .micro import max_time_step
        if dt > max_time_step(m):
            issues.add("dt", f"exceeds the anti-overtaking bound {max_time_step(m)}")

    issues.raise_if_any()
    return ScenarioConfig(name, mode, fd, theta, t_end, profiles, snapshots, epsilon, light, dt,
                          grid, boundary, compare, checks, seed)


def _range(issues, d, key):
    v = d.get(key)
    if v is None:
        return None
    if (not isinstance(v, list) or len(v) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v) or v[1] <= v[0]):
        issues.add(f"checks.{key}", "must be [lo, hi] with lo < hi")
        return None
    return (float(v[0]), float(v[1]))


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"<line {exc.lineno}>", f"invalid JSON: {exc.msg}") from exc
    return parse_config(doc)


# -- presets ------------------------------------------------------------------

def _base(name: str, mode: str, **kw) -> dict:
    d = {"schema_version": SCHEMA_VERSION, "name": name, "mode": mode, "flux": {"A": 1.0, "B": 1.0},
         "theta": 0.5, "t_end": 1.0, "snapshots": 101}
    d.update(kw)
    return d


MERGE_PROFILES = {"road0": [], "road1": [[-1.0, 0.0, 0.6]], "road2": [[-1.0, 0.0, 0.4]]}

# (rho0, rho1, rho2): constant states on [0, L) of road 0 and [-L, 0) of roads 1 and 2
JUNCTION_RIEMANN_DATA = {
    "twin-queues": (0.0, 0.854, 0.854),
    "light-merge": (0.0, 0.6, 0.4),
    "blocked-exit": (0.9, 0.0, 0.9),
    "unbalanced": (0.3, 0.9, 0.1),
    "mixed-congestion": (0.2, 0.3, 0.95),
}


def _riemann_junction(name: str, data: tuple) -> dict:
    r0, r1, r2 = data
    L = 2.5
    return _base(f"junction-{name}", "germ-check", grid={"dx": 0.005, "L": L},
                 profiles={"road0": [[0.0, L, r0]], "road1": [[-L, 0.0, r1]], "road2": [[-L, 0.0, r2]]},
                 checks={"burn_in": 0.2})


def _generator_steady() -> dict:
    m = flux_mod.make_quadratic(1.0, 1.0)
    g = GermParams(0.5)
    lam = m.f_max / 2
    p = gamma_point(m, g, lam)
    L = 1.0
    return _base("generator-steady", "germ-check", snapshots=11,
                 grid={"dx": 0.01, "L": L},
                 profiles={"road0": [[0.0, L, p.p0]], "road1": [[-L, 0.0, p.p1]], "road2": [[-L, 0.0, p.p2]]},
                 boundary={"inflow": [m.f(p.p1), m.f(p.p2)], "outflow": m.f(p.p0)},
                 checks={"burn_in": 0.0, "germ_tol": 1e-10 * m.f_max, "pass_fraction": 1.0,
                         "max_drift": 1e-12})


PRESETS = {
    "riemann-merge": lambda: _base(
        "riemann-merge", "compare", profiles=MERGE_PROFILES, light={"period": 0.2},
        grid={"dx": 0.001, "L": 2.5},
        compare={"pair": ["micro", "meso"], "sweep": "epsilon", "values": [0.04, 0.02, 0.01, 0.005]}),
    "red-light-platoon": lambda: _base(
        "red-light-platoon", "tv-check", theta=0.999, t_end=3.0, snapshots=301, epsilon=0.002,
        light={"period": 1000.0},
        profiles={"road0": [], "road1": [], "road2": [[-1.0, -0.5, 0.3]]},
        checks={"tv_kind": "stopped-line"}),
    "generator-steady": _generator_steady,
    "micro-homog-sweep": lambda: _base(
        "micro-homog-sweep", "compare", profiles=MERGE_PROFILES, light={"alpha": 0.75},
        grid={"dx": 0.001, "L": 2.5},
        compare={"pair": ["micro", "homog"], "sweep": "epsilon", "values": [0.04, 0.02, 0.01, 0.005]}),
    "free-line-riemann": lambda: _base(
        "free-line-riemann", "entropy-check", epsilon=0.0025, snapshots=801, light={"period": 1.0},
        profiles={"road0": [[0.0, 1.0, 0.8], [1.0, 2.0, 0.2]], "road1": [], "road2": []},
        checks={"hat_t": [0.0, 1.0], "hat_x": [0.25, 2.75], "tv_kind": "free-line"}),
    "merge-homogenization": lambda: _base(
        "merge-homogenization", "compare", profiles=MERGE_PROFILES, grid={"dx": 0.002, "L": 2.5},
        compare={"pair": ["meso", "homog"], "sweep": "period", "values": [0.4, 0.2, 0.1, 0.05]}),
}
for _name, _data in JUNCTION_RIEMANN_DATA.items():
    PRESETS[f"junction-{_name}"] = (lambda n=_name, d=_data: _riemann_junction(n, d))


def preset_document(name: str) -> dict:
    if name not in PRESETS:
        raise ScenarioError("preset", f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return PRESETS[name]()


def preset(name: str) -> ScenarioConfig:
    return parse_config(preset_document(name))


def with_mode(cfg: ScenarioConfig, mode: str) -> ScenarioConfig:
    """Same scenario, different mode, revalidated."""
    doc = cfg.to_dict()
    doc["mode"] = mode
    return parse_config(doc)


__all__ = ["ScenarioConfig", "parse_config", "load_config", "preset", "preset_document", "PRESETS",
           "MODES", "SCHEMA_VERSION", "JUNCTION_RIEMANN_DATA", "with_mode"]
