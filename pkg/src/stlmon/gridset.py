"""Boolean occupancy sets over a uniform Cartesian grid of the state space.

Cells are half-open ``[lo, lo + w)`` per dimension except the last cell of
each dimension, which is closed.  Rasterization treats region boundaries as
measure-zero: ``INNER`` marks cells contained in the closure of the region,
``OUTER`` marks cells whose interior meets the interior of the region.  For
unions of boxes the two modes are exact De Morgan duals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .stl import And, Box, Not, Or, Pred, TrueP

__all__ = [
    "GridGeometry", "GridSet", "Mode", "GeometryMismatch",
    "rasterize", "member", "union", "intersect", "difference", "is_empty", "count",
]

# Boundary snapping tolerance, in units of cell width.
SNAP = 1e-9


class GeometryMismatch(ValueError):
    pass


class Mode(str, enum.Enum):
    INNER = "inner"
    OUTER = "outer"

    def flip(self) -> "Mode":
        return Mode.OUTER if self is Mode.INNER else Mode.INNER


@dataclass(frozen=True)
class GridGeometry:
    bounds: tuple[tuple[float, float], ...]
    cells: tuple[int, ...]

    def __init__(self, bounds: Sequence[Sequence[float]], cells: Sequence[int]):
        b = tuple((float(lo), float(hi)) for lo, hi in bounds)
        c = tuple(int(n) for n in cells)
        if len(b) != len(c) or not b:
            raise ValueError("bounds and cells must have the same non-zero length")
        if any(n < 1 for n in c):
            raise ValueError(f"cell counts must be >= 1, got {c}")
        if any(not hi > lo for lo, hi in b):
            raise ValueError(f"grid bounds must have hi > lo, got {b}")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "cells", c)

    @property
    def ndim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @cached_property
    def lo(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @cached_property
    def hi(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    @cached_property
    def widths(self) -> np.ndarray:
        return (self.hi - self.lo) / np.array(self.cells)

    def edges(self, d: int) -> np.ndarray:
        lo, hi = self.bounds[d]
        return np.linspace(lo, hi, self.cells[d] + 1)

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centers, shape ``(size, ndim)`` in row-major order."""
        axes = [0.5 * (e[:-1] + e[1:]) for e in map(self.edges, range(self.ndim))]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def corners(self) -> np.ndarray:
        """All ``2**ndim`` corners of every cell, shape ``(2**ndim, size, ndim)``."""
        out = []
        for bits in np.ndindex(*(2,) * self.ndim):
            axes = [self.edges(d)[bits[d]:][: self.cells[d]] for d in range(self.ndim)]
            mesh = np.meshgrid(*axes, indexing="ij")
            out.append(np.stack([m.ravel() for m in mesh], axis=1))
        return np.stack(out)

    def cell_index(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Per-dimension cell indices of ``points`` ``(N, ndim)`` and an in-grid flag."""
        pts = np.asarray(points, dtype=float)
        t = (pts - self.lo) / self.widths
        r = np.rint(t)
        t = np.where(np.abs(t - r) < SNAP, r, t)
        idx = np.floor(t).astype(np.int64)
        n = np.array(self.cells)
        # Last cell is closed on the upper side.
        idx = np.where((idx == n) & (t == n), n - 1, idx)
        inside = np.all((idx >= 0) & (idx < n) & np.isfinite(t), axis=-1)
        return idx, inside

    def locate(self, points) -> np.ndarray:
        """Row-major flat cell index of each point, ``-1`` when outside the grid."""
        idx, inside = self.cell_index(points)
        flat = np.ravel_multi_index(tuple(np.clip(idx, 0, np.array(self.cells) - 1).T), self.cells)
        return np.where(inside, flat, -1)

    def full(self) -> "GridSet":
        return GridSet(self, np.ones(self.cells, dtype=bool))

    def empty(self) -> "GridSet":
        return GridSet(self, np.zeros(self.cells, dtype=bool))


class GridSet:
    """Immutable boolean mask over a :class:`GridGeometry`."""

    __slots__ = ("geometry", "mask")

    def __init__(self, geometry: GridGeometry, mask):
        arr = np.array(mask, dtype=bool).reshape(geometry.cells)
        arr.setflags(write=False)
        self.geometry = geometry
        self.mask = arr

    @property
    def flat(self) -> np.ndarray:
        return self.mask.reshape(-1)

    def _check(self, other: "GridSet"):
        if not isinstance(other, GridSet):
            raise TypeError(f"expected GridSet, got {type(other).__name__}")
        if other.geometry != self.geometry:
            raise GeometryMismatch(f"{self.geometry} != {other.geometry}")

    def __and__(self, other):
        self._check(other)
        return GridSet(self.geometry, self.mask & other.mask)

    def __or__(self, other):
        self._check(other)
        return GridSet(self.geometry, self.mask | other.mask)

    def __sub__(self, other):
        self._check(other)
        return GridSet(self.geometry, self.mask & ~other.mask)

    def __invert__(self):
        return GridSet(self.geometry, ~self.mask)

    def __eq__(self, other):
        return (isinstance(other, GridSet) and self.geometry == other.geometry
                and np.array_equal(self.mask, other.mask))

    def __hash__(self):
        return hash((self.geometry, self.mask.tobytes()))

    def __le__(self, other):
        """Subset test."""
        self._check(other)
        return not np.any(self.mask & ~other.mask)

    def __repr__(self):
        return f"GridSet(cells={self.geometry.cells}, count={self.count()})"

    def count(self) -> int:
        return int(self.mask.sum())

    def is_empty(self) -> bool:
        return not self.mask.any()

    def member(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.geometry.ndim,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.geometry.ndim},)")
        i = self.geometry.locate(x[None, :])[0]
        return bool(i >= 0 and self.flat[i])

    def members(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.geometry.ndim)
        i = self.geometry.locate(pts)
        return (i >= 0) & self.flat[np.maximum(i, 0)]

    def intervals(self) -> list[tuple[float, float]]:
        """Maximal runs of true cells as ``(lo, hi)`` pairs (1-D grids only)."""
        if self.geometry.ndim != 1:
            raise ValueError("intervals() needs a 1-D grid")
        e = self.geometry.edges(0)
        m = np.concatenate([[False], self.flat, [False]]).astype(np.int8)
        d = np.diff(m)
        starts, stops = np.flatnonzero(d == 1), np.flatnonzero(d == -1)
        return [(float(e[s]), float(e[t])) for s, t in zip(starts, stops)]

    def bounding_box(self) -> list[tuple[float, float]] | None:
        if self.is_empty():
            return None
        out = []
        for d in range(self.geometry.ndim):
            other = tuple(j for j in range(self.geometry.ndim) if j != d)
            used = np.flatnonzero(self.mask.any(axis=other) if other else self.mask)
            e = self.geometry.edges(d)
            out.append((float(e[used[0]]), float(e[used[-1] + 1])))
        return out


def member(s: GridSet, x) -> bool:
    return s.member(x)


def union(a: GridSet, b: GridSet) -> GridSet:
    return a | b


def intersect(a: GridSet, b: GridSet) -> GridSet:
    return a & b


def difference(a: GridSet, b: GridSet) -> GridSet:
    return a - b


def is_empty(a: GridSet) -> bool:
    return a.is_empty()


def count(a: GridSet) -> int:
    return a.count()


def rasterize(region: Pred, g: GridGeometry, mode: Mode | str = Mode.INNER) -> GridSet:
    return GridSet(g, _raster(region, g, Mode(mode)))


def _raster(p: Pred, g: GridGeometry, mode: Mode) -> np.ndarray:
    if isinstance(p, TrueP):
        return np.ones(g.cells, dtype=bool)
    if isinstance(p, Box):
        if p.dim >= g.ndim:
            raise ValueError(f"x{p.dim + 1} out of range for {g.ndim}-dimensional grid")
        e = g.edges(p.dim)
        c0, c1 = e[:-1], e[1:]
        tol = SNAP * g.widths[p.dim]
        if mode is Mode.INNER:
            axis = (p.lo <= c0 + tol) & (c1 - tol <= p.hi)
        else:
            axis = (c0 < p.hi - tol) & (c1 > p.lo + tol)
        shape = [1] * g.ndim
        shape[p.dim] = g.cells[p.dim]
        return np.broadcast_to(axis.reshape(shape), g.cells).copy()
    if isinstance(p, Not):
        return ~_raster(p.arg, g, mode.flip())
    if isinstance(p, And):
        out = _raster(p.args[0], g, mode)
        for a in p.args[1:]:
            out &= _raster(a, g, mode)
        return out
    if isinstance(p, Or):
        out = _raster(p.args[0], g, mode)
        for a in p.args[1:]:
            out |= _raster(a, g, mode)
        return out
    raise TypeError(f"not a predicate: {p!r}")
