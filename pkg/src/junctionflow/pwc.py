"""Piecewise-constant functions on the line and exact overlay arithmetic."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PiecewiseConstant:
    """Function equal to ``values[i]`` on ``[edges[i], edges[i+1])``, zero elsewhere.

    Adjacent pieces share edges, so a function with holes stores explicit
    zero pieces for them.
    """

    edges: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if edges.ndim != 1 or values.ndim != 1:
            raise ValueError("edges and values must be 1-d")
        if values.size and edges.size != values.size + 1:
            raise ValueError("need len(edges) == len(values) + 1")
        if np.any(np.diff(edges) < 0):
            raise ValueError("edges must be nondecreasing")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "values", values)

    @classmethod
    def empty(cls) -> "PiecewiseConstant":
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def from_intervals(cls, lefts, rights, values) -> "PiecewiseConstant":
        """Build from possibly non-contiguous, non-overlapping intervals."""
        lefts = np.asarray(lefts, dtype=float)
        rights = np.asarray(rights, dtype=float)
        values = np.asarray(values, dtype=float)
        if lefts.size == 0:
            return cls.empty()
        order = np.argsort(lefts, kind="stable")
        lefts, rights, values = lefts[order], rights[order], values[order]
        if np.any(rights < lefts) or np.any(lefts[1:] < rights[:-1] - 1e-12 * (1 + np.abs(rights[:-1]))):
            raise ValueError("intervals must be ordered and non-overlapping")
        edges = [lefts[0]]
        vals = []
        for a, b, v in zip(lefts, rights, values):
            if a > edges[-1]:
                vals.append(0.0)
                edges.append(a)
            vals.append(v)
            edges.append(max(b, edges[-1]))
        return cls(np.array(edges), np.array(vals))

    @property
    def is_empty(self) -> bool:
        return self.values.size == 0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_empty:
            return np.zeros_like(x)
        idx = np.searchsorted(self.edges, x, side="right") - 1
        inside = (idx >= 0) & (idx < self.values.size)
        return np.where(inside, self.values[np.clip(idx, 0, self.values.size - 1)], 0.0)

    def restrict(self, a: float, b: float) -> "PiecewiseConstant":
        """Copy set to zero outside ``[a, b)``."""
        if self.is_empty or b <= a:
            return PiecewiseConstant.empty()
        edges = np.clip(self.edges, a, b)
        keep = np.diff(edges) > 0
        if not np.any(keep):
            return PiecewiseConstant.empty()
        lefts, rights = edges[:-1][keep], edges[1:][keep]
        return PiecewiseConstant.from_intervals(lefts, rights, self.values[keep])

    def integral(self) -> float:
        if self.is_empty:
            return 0.0
        return float(np.sum(self.values * np.diff(self.edges)))

    def __add__(self, other: "PiecewiseConstant") -> "PiecewiseConstant":
        return combine(self, other, np.add)


def _breakpoints(*fs: PiecewiseConstant) -> np.ndarray:
    pts = [f.edges for f in fs if not f.is_empty]
    if not pts:
        return np.zeros(0)
    return np.unique(np.concatenate(pts))


def combine(a: PiecewiseConstant, b: PiecewiseConstant, op) -> PiecewiseConstant:
    """Pointwise ``op(a, b)`` on the common refinement of both partitions."""
    pts = _breakpoints(a, b)
    if pts.size < 2:
        return PiecewiseConstant.empty()
    mids = 0.5 * (pts[:-1] + pts[1:])
    return PiecewiseConstant(pts, op(a(mids), b(mids)))


def l1_distance(a: PiecewiseConstant, b: PiecewiseConstant, lo: float = -np.inf, hi: float = np.inf) -> float:
    """Exact ``int_lo^hi |a - b| dx`` by interval overlay."""
    pts = _breakpoints(a, b)
    if pts.size < 2:
        return 0.0
    lo_c = max(lo, pts[0])
    hi_c = min(hi, pts[-1])
    if hi_c <= lo_c:
        return 0.0
    pts = np.unique(np.concatenate([np.clip(pts, lo_c, hi_c), [lo_c, hi_c]]))
    widths = np.diff(pts)
    mids = 0.5 * (pts[:-1] + pts[1:])
    return float(np.sum(np.abs(a(mids) - b(mids)) * widths))


def total_variation(values: np.ndarray, ambient: float) -> float:
    """Variation of a contiguous piecewise-constant profile padded by ``ambient`` on both sides."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    padded = np.concatenate([[ambient], values, [ambient]])
    return float(np.sum(np.abs(np.diff(padded))))
