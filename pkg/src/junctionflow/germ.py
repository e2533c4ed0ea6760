"""Kruzhkov entropy pairs, junction dissipation and the homogenized germ.

Trace triples are ordered ``(p0, p1, p2)``: outgoing road 0 first, then the
incoming roads 1 and 2. Array-valued helpers take the triple on the last
axis, so a batch of points is an ``(n, 3)`` array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InvalidParameterError
from .flux import FluxModel

DEFAULT_GAMMA_SAMPLES = 200
MAX_LATTICE_POINTS = 10**8


class GermPoint(NamedTuple):
    p0: float
    p1: float
    p2: float


@dataclass(frozen=True)
class GermParams:
    """Green fraction ``theta`` of road 1; road 2 gets ``1 - theta``."""

    theta: float

    def __post_init__(self):
        if not (0.0 < self.theta < 1.0):
            raise InvalidParameterError(f"theta must lie in (0, 1), got {self.theta}")

    @property
    def thetas(self) -> tuple[float, float, float]:
        return (1.0, self.theta, 1.0 - self.theta)


@dataclass(frozen=True)
class GeneratingSet:
    gamma: np.ndarray
    corners: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return np.vstack([self.gamma, self.corners])


def _triple(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.shape[-1] != 3:
        raise DomainError("trace points must have 3 components")
    return P


def entropy_flux(m: FluxModel, pbar, p):
    """``q(pbar, p) = sign(p - pbar) (f(p) - f(pbar))`` with ``sign(0) = 0``."""
    p = np.asarray(p, dtype=float)
    pbar = np.asarray(pbar, dtype=float)
    return m._out(np.sign(p - pbar) * (np.asarray(m.f(p)) - np.asarray(m.f(pbar))))


def entropy_pair(m: FluxModel, pbar, p):
    """Kruzhkov entropy ``|p - pbar|`` and its flux."""
    m.f(pbar), m.f(p)  # domain check
    eta = np.abs(np.asarray(p, dtype=float) - np.asarray(pbar, dtype=float))
    return m._out(eta), entropy_flux(m, pbar, p)


def dissipation(m: FluxModel, Pbar, P):
    """Incoming minus outgoing entropy flux at the junction."""
    Pbar = _triple(Pbar)
    P = _triple(P)
    q0 = entropy_flux(m, Pbar[..., 0], P[..., 0])
    q1 = entropy_flux(m, Pbar[..., 1], P[..., 1])
    q2 = entropy_flux(m, Pbar[..., 2], P[..., 2])
    return m._out(np.asarray(q1) + np.asarray(q2) - np.asarray(q0))


def rh_residual(m: FluxModel, P):
    """``f(p0) - f(p1) - f(p2)``."""
    P = _triple(P)
    return m._out(np.asarray(m.f(P[..., 0])) - m.f(P[..., 1]) - m.f(P[..., 2]))


def gamma_point(m: FluxModel, g: GermParams, lam: float) -> GermPoint:
    """Point of the generating curve at flux level ``lam``."""
    _, t1, t2 = g.thetas
    return GermPoint(m.inv_f_minus(lam), m.inv_f_minus(t1 * lam), m.inv_f_minus(t2 * lam))


def gamma_samples(m: FluxModel, g: GermParams, count: int = DEFAULT_GAMMA_SAMPLES) -> np.ndarray:
    """Uniform-in-flux samples of the curve, endpoints ``0`` and ``f_max`` included."""
    if count < 2:
        raise InvalidParameterError("need at least 2 curve samples")
    _, t1, t2 = g.thetas
    lam = np.linspace(0.0, m.f_max, count)
    return np.stack([m.inv_f_minus(lam), m.inv_f_minus(t1 * lam), m.inv_f_minus(t2 * lam)], axis=-1)


def corner_points(m: FluxModel, g: GermParams) -> tuple[GermPoint, GermPoint, GermPoint, GermPoint]:
    _, t1, t2 = g.thetas
    P0 = GermPoint(m.rho_max, m.rho_max, m.rho_max)
    P1 = GermPoint(m.inv_f_plus(t1 * m.f_max), m.inv_f_minus(t1 * m.f_max), 0.0)
    P2 = GermPoint(m.inv_f_plus(t2 * m.f_max), 0.0, m.inv_f_minus(t2 * m.f_max))
    P3 = GermPoint(0.0, 0.0, 0.0)
    return P0, P1, P2, P3


def generating_set(m: FluxModel, g: GermParams, count: int = DEFAULT_GAMMA_SAMPLES) -> GeneratingSet:
    return GeneratingSet(gamma=gamma_samples(m, g, count), corners=np.array(corner_points(m, g), dtype=float))


def direct_margin(m: FluxModel, g: GermParams, P):
    """Signed slack of the explicit germ description.

    Nonnegative exactly on the germ; the Rankine-Hugoniot equality contributes
    ``-|residual|``, so the margin never exceeds zero off that surface.
    """
    P = _triple(P)
    t0, t1, t2 = g.thetas
    f0, f1, f2 = (np.asarray(m.f(P[..., k])) for k in range(3))
    s0, s1, s2 = (np.asarray(m.f_minus(P[..., k])) for k in range(3))
    margins = [
        -np.abs(f0 - f1 - f2),
        t0 * m.f_max - f0,
        t1 * m.f_max - f1,
        t2 * m.f_max - f2,
        s1 - t1 * s0,
        s2 - t2 * s0,
    ]
    return m._out(np.minimum.reduce(margins))


def constraint_slacks(m: FluxModel, g: GermParams, P) -> dict[str, np.ndarray]:
    """Per-constraint slack (tolerance-free) used for diagnostic breakdowns."""
    P = _triple(P)
    t0, t1, t2 = g.thetas
    f0, f1, f2 = (np.asarray(m.f(P[..., k])) for k in range(3))
    s0, s1, s2 = (np.asarray(m.f_minus(P[..., k])) for k in range(3))
    return {
        "rankine_hugoniot": -np.abs(f0 - f1 - f2),
        "cap_0": t0 * m.f_max - f0,
        "cap_1": t1 * m.f_max - f1,
        "cap_2": t2 * m.f_max - f2,
        "supply_1": s1 - t1 * s0,
        "supply_2": s2 - t2 * s0,
    }


def in_germ_direct(m: FluxModel, g: GermParams, P, tol: float | None = None):
    if tol is None:
        tol = 1e-9 * m.f_max
    return np.asarray(direct_margin(m, g, P)) >= -tol if np.ndim(P) > 1 else bool(direct_margin(m, g, P) >= -tol)


def generated_margin(m: FluxModel, P, E) -> np.ndarray | float:
    """``min_{Pbar in E} D(Pbar, P)``."""
    E = E.points if isinstance(E, GeneratingSet) else _triple(E)
    if E.ndim == 1:
        E = E[None, :]
    if E.shape[0] == 0:
        raise InvalidParameterError("generating set is empty")
    P = _triple(P)
    D = dissipation(m, E.reshape((E.shape[0],) + (1,) * (P.ndim - 1) + (3,)), P[None, ...])
    return m._out(np.min(D, axis=0))


def in_germ_generated(m: FluxModel, g: GermParams, P, E, tol: float | None = None):
    if tol is None:
        tol = 1e-9 * m.f_max
    margin = generated_margin(m, P, E)
    return np.asarray(margin) >= -tol if np.ndim(P) > 1 else bool(margin >= -tol)


@dataclass
class EquivalenceReport:
    """Outcome of comparing the explicit and generated germ descriptions."""

    theta: float
    grid_step: float
    gamma_samples: int
    band: float
    lattice_points: int
    lattice_decided: int
    lattice_in_direct: int
    lattice_in_generated: int
    lattice_mismatches: int
    surface_points: int
    surface_decided: int
    surface_in_direct: int
    surface_mismatches: int
    worst_generated_margin_outside: float
    witnesses: list = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return self.lattice_mismatches == 0 and self.surface_mismatches == 0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["consistent"] = self.consistent
        return d


def _axis_q(m: FluxModel, pbar: np.ndarray, grid: np.ndarray) -> np.ndarray:
    # q(pbar_e, grid_j) for every generator e: shape (n_e, n_grid)
    return np.sign(grid[None, :] - pbar[:, None]) * (m.f(grid)[None, :] - m.f(pbar)[:, None])


def _classify(direct, gen, band, tol):
    """Decided points and disagreements between the two margins.

    The generated margin is never clearly positive: on the germ some generator
    always gives zero dissipation. A point is decided when the explicit margin
    clears the band either way, or the generated margin is clearly negative.
    """
    clearly_in = direct > band
    direct_out = direct < -band
    gen_out = gen < -band
    decided = clearly_in | direct_out | gen_out
    mismatch = ((clearly_in & (gen < -tol)) | (direct_out & (gen >= -tol))
                | (gen_out & (direct >= -tol)))
    return decided, mismatch


def brute_force_equivalence(
    m: FluxModel,
    g: GermParams,
    grid_step: float = 0.01,
    gamma_count: int = DEFAULT_GAMMA_SAMPLES,
    tol: float | None = None,
    max_witnesses: int = 10,
) -> EquivalenceReport:
    """Sweep the trace box and compare membership by both descriptions.

    Two sweeps are made. The lattice sweep covers ``Q`` with the given step;
    because the germ lies on the Rankine-Hugoniot surface, almost every lattice
    point is clearly outside both sets and only disagreements between clearly
    decided points count. The surface sweep builds points exactly on that
    surface (``p1, p2`` on the lattice, ``p0`` from either monotone branch), so
    the inequality constraints are tested two-sidedly; there the explicit
    margin is taken over the inequalities, the RH slack being roundoff. Points
    whose explicit margin lies within ``2 * grid_step * max|f'|`` of zero and
    whose generated margin is not below minus that band are undecidable and
    excluded (see :func:`_classify`).
    """
    if grid_step <= 0:
        raise InvalidParameterError("grid_step must be positive")
    n = int(np.floor(m.rho_max / grid_step + 1e-9)) + 1
    if n**3 > MAX_LATTICE_POINTS:
        raise InvalidParameterError(
            f"lattice of {n**3} points exceeds {MAX_LATTICE_POINTS}; increase grid_step"
        )
    if tol is None:
        tol = 1e-9 * m.f_max
    band = 2.0 * grid_step * m.max_speed
    grid = np.linspace(0.0, (n - 1) * grid_step, n) if n > 1 else np.zeros(1)
    E = generating_set(m, g, gamma_count).points

    # lattice sweep; D(Pbar, P) splits into per-axis entropy fluxes
    q0 = _axis_q(m, E[:, 0], grid)
    q1 = _axis_q(m, E[:, 1], grid)
    q2 = _axis_q(m, E[:, 2], grid)
    gen = np.full((n, n, n), np.inf)
    for e in range(E.shape[0]):
        np.minimum(gen, q1[e][None, :, None] + q2[e][None, None, :] - q0[e][:, None, None], out=gen)
    P = np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), axis=-1)
    direct = np.asarray(direct_margin(m, g, P))
    decided, mismatch = _classify(direct, gen, band, tol)
    witnesses = [P[idx].tolist() for idx in zip(*np.nonzero(mismatch))][:max_witnesses]
    outside = decided & (direct < -tol)
    worst = float(gen[outside].max()) if np.any(outside) else float("-inf")

    # surface sweep
    a, b = np.meshgrid(grid, grid, indexing="ij")
    total = np.asarray(m.f(a)) + np.asarray(m.f(b))
    ok = total <= m.f_max * (1 + 1e-12)
    a, b, total = a[ok], b[ok], np.minimum(total[ok], m.f_max)
    S = np.concatenate([
        np.stack([m.inv_f_plus(total), a, b], axis=-1),
        np.stack([m.inv_f_minus(total), a, b], axis=-1),
    ]) if a.size else np.zeros((0, 3))
    if S.shape[0]:
        # RH holds by construction here, so decide on the inequality slacks alone
        slacks = constraint_slacks(m, g, S)
        rh_ok = -slacks.pop("rankine_hugoniot") <= tol
        s_direct = np.where(rh_ok, np.minimum.reduce(list(slacks.values())), -np.inf)
        s_gen = np.asarray(generated_margin(m, S, E))
        s_decided, s_mismatch = _classify(s_direct, s_gen, band, tol)
        witnesses += S[s_mismatch][: max(0, max_witnesses - len(witnesses))].tolist()
        s_in = int(np.sum(s_direct > band))
    else:
        s_decided = s_mismatch = np.zeros(0, dtype=bool)
        s_in = 0

    return EquivalenceReport(
        theta=g.theta,
        grid_step=grid_step,
        gamma_samples=gamma_count,
        band=band,
        lattice_points=int(n**3),
        lattice_decided=int(decided.sum()),
        lattice_in_direct=int(np.sum(direct >= -tol)),
        lattice_in_generated=int(np.sum(gen >= -tol)),
        lattice_mismatches=int(mismatch.sum()),
        surface_points=int(S.shape[0]),
        surface_decided=int(s_decided.sum()),
        surface_in_direct=s_in,
        surface_mismatches=int(s_mismatch.sum()),
        worst_generated_margin_outside=worst,
        witnesses=witnesses,
    )
