"""Concave traffic flux, its monotone envelopes, and the velocity laws.

A :class:`FluxModel` bundles the flux ``f`` on ``[0, rho_max]`` with

* the supply ``f_minus`` (smallest nonincreasing map above ``f``) and the
  demand ``f_plus`` (smallest nondecreasing map above ``f``), plus inverses
  of their strictly monotone branches;
* the microscopic velocity ``V(e) = e f(1/e)`` for a spacing ``e`` and the
  macroscopic velocity ``v(r) = V(1/r) = f(r)/r``.

All evaluators accept scalars or numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, InvalidParameterError

# Arguments within this relative distance of an endpoint are clamped.
ENDPOINT_SLACK = 1e-12

_BISECTION_ITERS = 200


@dataclass(frozen=True)
class FluxModel:
    """Immutable description of a strictly concave flux.

    Use :func:`make_quadratic` or :func:`make_tabulated` rather than calling the
    constructor directly.
    """

    rho_max: float
    rho_crit: float
    f_max: float
    kind: str
    params: tuple
    _f: Callable = field(repr=False, compare=False)
    _df: Callable = field(repr=False, compare=False)

    # -- basic quantities -------------------------------------------------
    @property
    def e_min(self) -> float:
        return 1.0 / self.rho_max

    @property
    def V_max(self) -> float:
        return float(self._df(np.asarray(0.0)))

    @property
    def max_speed(self) -> float:
        """Largest characteristic speed ``max |f'|`` (CFL constant)."""
        return max(abs(float(self._df(np.asarray(0.0)))),
                   abs(float(self._df(np.asarray(self.rho_max)))))

    @property
    def lipschitz_V(self) -> float:
        """Lipschitz constant of ``V``; equals ``-rho_max f'(rho_max)``."""
        return -self.rho_max * float(self._df(np.asarray(self.rho_max)))

    def to_dict(self) -> dict:
        if self.kind == "quadratic":
            A, B = self.params
            return {"A": A, "B": B}
        rho, flux = self.params
        return {"table": {"rho": list(rho), "flux": list(flux)}}

    # -- domain handling --------------------------------------------------
    def _density(self, r):
        r = np.asarray(r, dtype=float)
        slack = ENDPOINT_SLACK * self.rho_max
        if np.any(r < -slack) or np.any(r > self.rho_max + slack) or np.any(np.isnan(r)):
            raise DomainError(f"density outside [0, {self.rho_max}]")
        return np.clip(r, 0.0, self.rho_max)

    def _flux_level(self, lam):
        lam = np.asarray(lam, dtype=float)
        slack = ENDPOINT_SLACK * self.f_max
        if np.any(lam < -slack) or np.any(lam > self.f_max + slack) or np.any(np.isnan(lam)):
            raise DomainError(f"flux level outside [0, {self.f_max}]")
        return np.clip(lam, 0.0, self.f_max)

    @staticmethod
    def _out(x):
        return float(x) if np.ndim(x) == 0 else x

    # -- evaluators -------------------------------------------------------
    def f(self, r):
        return self._out(self._f(self._density(r)))

    def df(self, r):
        return self._out(self._df(self._density(r)))

    def f_minus(self, r):
        """Supply: ``f_max`` left of the critical density, ``f`` right of it."""
        r = self._density(r)
        return self._out(np.where(r <= self.rho_crit, self.f_max, self._f(r)))

    def f_plus(self, r):
        """Demand: ``f`` left of the critical density, ``f_max`` right of it."""
        r = self._density(r)
        return self._out(np.where(r >= self.rho_crit, self.f_max, self._f(r)))

    def V(self, e):
        """Microscopic velocity for spacing ``e`` (zero below ``e_min``)."""
        e = np.asarray(e, dtype=float)
        if np.any(e < 0) or np.any(np.isnan(e)):
            raise DomainError("negative spacing")
        big = e > self.e_min
        r = np.clip(1.0 / np.where(big, e, 1.0), 0.0, self.rho_max)
        pos = r > 0
        # V(e) = f(r)/r with r = 1/e; infinite spacing gives V_max
        vel = np.where(pos, self._f(r) / np.where(pos, r, 1.0), self.V_max)
        return self._out(np.where(big, vel, 0.0))

    def v(self, r):
        """Macroscopic velocity ``f(r)/r`` with ``v(0) = V_max``."""
        r = self._density(r)
        pos = r > 0
        safe = np.where(pos, r, 1.0)
        return self._out(np.where(pos, self._f(safe) / safe, self.V_max))

    def inv_f_minus(self, lam):
        """Density on ``[rho_crit, rho_max]`` whose flux equals ``lam``."""
        lam = self._flux_level(lam)
        if self.kind == "quadratic":
            A, B = self.params
            disc = np.maximum(A * A - 4.0 * B * lam, 0.0)
            return self._out(np.clip((A + np.sqrt(disc)) / (2.0 * B), self.rho_crit, self.rho_max))
        return self._out(self._bisect(lam, self.rho_crit, self.rho_max, decreasing=True))

    def inv_f_plus(self, lam):
        """Density on ``[0, rho_crit]`` whose flux equals ``lam``."""
        lam = self._flux_level(lam)
        if self.kind == "quadratic":
            A, B = self.params
            disc = np.maximum(A * A - 4.0 * B * lam, 0.0)
            return self._out(np.clip((A - np.sqrt(disc)) / (2.0 * B), 0.0, self.rho_crit))
        return self._out(self._bisect(lam, 0.0, self.rho_crit, decreasing=False))

    def _bisect(self, lam, lo, hi, decreasing):
        a = np.full(lam.shape, lo)
        b = np.full(lam.shape, hi)
        for _ in range(_BISECTION_ITERS):
            mid = 0.5 * (a + b)
            fm = self._f(mid)
            go_right = (fm > lam) if decreasing else (fm < lam)
            a = np.where(go_right, mid, a)
            b = np.where(go_right, b, mid)
            if np.all(b - a <= 1e-15 * self.rho_max):
                break
        return 0.5 * (a + b)


def make_quadratic(A: float, B: float) -> FluxModel:
    """Quadratic flux ``f(r) = A r - B r^2`` on ``[0, A/B]``."""
    if not (np.isfinite(A) and np.isfinite(B)) or A <= 0 or B <= 0:
        raise InvalidParameterError(f"quadratic flux needs A > 0 and B > 0, got A={A}, B={B}")
    A = float(A)
    B = float(B)
    rho_max = A / B
    return FluxModel(
        rho_max=rho_max,
        rho_crit=A / (2.0 * B),
        f_max=A * A / (4.0 * B),
        kind="quadratic",
        params=(A, B),
        # factored so that f(rho_max) is exactly zero
        _f=lambda r: B * r * (rho_max - r),
        _df=lambda r: A - 2.0 * B * r,
    )


def make_tabulated(rho: Sequence[float], flux: Sequence[float]) -> FluxModel:
    """Piecewise-linear flux through tabulated points.

    The table must start at ``(0, 0)``, end at ``(rho_max, 0)``, have
    increasing densities and strictly decreasing slopes (strict concavity of
    the data). The derivative is the exact piecewise-constant slope; at a
    node the left slope is used, except at zero where the right slope is.
    """
    rho = np.asarray(rho, dtype=float)
    flux = np.asarray(flux, dtype=float)
    if rho.ndim != 1 or rho.shape != flux.shape or rho.size < 3:
        raise InvalidParameterError("table needs matching 1-d arrays of at least 3 points")
    if rho[0] != 0.0 or flux[0] != 0.0 or flux[-1] != 0.0:
        raise InvalidParameterError("table must start at (0, 0) and end with zero flux")
    if np.any(np.diff(rho) <= 0):
        raise InvalidParameterError("table densities must be strictly increasing")
    slopes = np.diff(flux) / np.diff(rho)
    if np.any(np.diff(slopes) >= 0):
        raise InvalidParameterError("table must be strictly concave (strictly decreasing slopes)")
    if slopes[0] <= 0 or slopes[-1] >= 0:
        raise InvalidParameterError("table must rise from zero and fall back to zero")
    k = int(np.argmax(flux))
    rho_max = float(rho[-1])

    def _f(r):
        return np.interp(r, rho, flux)

    def _df(r):
        r = np.asarray(r, dtype=float)
        idx = np.clip(np.searchsorted(rho, r, side="left") - 1, 0, slopes.size - 1)
        return slopes[idx]

    return FluxModel(
        rho_max=rho_max,
        rho_crit=float(rho[k]),
        f_max=float(flux[k]),
        kind="table",
        params=(tuple(rho.tolist()), tuple(flux.tolist())),
        _f=_f,
        _df=_df,
    )


def from_dict(d: dict) -> FluxModel:
    """Build a model from its configuration form (``A``/``B`` or ``table``)."""
    if "table" in d:
        return make_tabulated(d["table"]["rho"], d["table"]["flux"])
    return make_quadratic(d["A"], d["B"])
