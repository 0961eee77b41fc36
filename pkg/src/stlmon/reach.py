"""H-one-step sets on grids: cells of ``H`` that some sampled control maps into a target.

The existential over controls is an exhaustive scan of a control lattice.
A cell passes for control ``u`` when every sample point ``p`` of the cell
(its center, optionally also its corners) has an image ``f(p, u)`` inside the
grid whose cell is in the target.  With ``epsilon > 0`` the whole L-infinity
box of radius ``epsilon`` around the image must be covered by target cells.
This is a sampling heuristic, not a certified enclosure.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .gridset import GeometryMismatch, GridGeometry, GridSet
from .system import SystemModel

__all__ = ["Scheme", "ControlGrid", "ReachConfig", "one_step_set", "iterated_one_step", "sample_points"]


class Scheme(str, enum.Enum):
    CENTER = "center"
    CORNERS_AND_CENTER = "corners_center"


@dataclass(frozen=True)
class ControlGrid:
    """Per-dimension sample counts over the control box, endpoints included."""

    counts: tuple[int, ...]

    def __init__(self, counts: int | Sequence[int]):
        c = (int(counts),) if np.isscalar(counts) else tuple(int(n) for n in counts)
        if not c or any(n < 2 for n in c):
            raise ValueError(f"control sample counts must be >= 2, got {c}")
        object.__setattr__(self, "counts", c)

    def points(self, control_bounds: np.ndarray) -> np.ndarray:
        """Lattice points, shape ``(prod(counts), m)``."""
        cb = np.asarray(control_bounds, dtype=float)
        counts = self.counts if len(self.counts) == len(cb) else self.counts * len(cb)
        if len(counts) != len(cb):
            raise ValueError(f"{len(self.counts)} sample counts for a {len(cb)}-dimensional control")
        axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(cb, counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class ReachConfig:
    controls: ControlGrid = field(default_factory=lambda: ControlGrid(11))
    scheme: Scheme = Scheme.CORNERS_AND_CENTER
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")


def sample_points(g: GridGeometry, scheme: Scheme) -> np.ndarray:
    """Test points of every cell, shape ``(S, size, ndim)``."""
    if Scheme(scheme) is Scheme.CENTER:
        return g.centers[None]
    return np.concatenate([g.corners, g.centers[None]], axis=0)


class _BoxCover:
    """Tests whether all cells of an index box are true, via an n-D prefix sum."""

    def __init__(self, target: GridSet):
        m = target.mask.astype(np.int64)
        for ax in range(m.ndim):
            m = np.cumsum(m, axis=ax)
        self.ps = np.pad(m, [(1, 0)] * m.ndim)
        self.ndim = m.ndim

    def all_true(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        total = np.zeros(len(lo), dtype=np.int64)
        for bits in np.ndindex(*(2,) * self.ndim):
            idx = tuple(np.where(bits[d], hi[:, d] + 1, lo[:, d]) for d in range(self.ndim))
            sign = (-1) ** (self.ndim - sum(bits))
            total += sign * self.ps[idx]
        return total == np.prod(hi - lo + 1, axis=1)


def _check(target: GridSet, mask: GridSet, model: SystemModel):
    if target.geometry != mask.geometry:
        raise GeometryMismatch("target and mask use different grids")
    if target.geometry.ndim != model.n:
        raise GeometryMismatch(f"{target.geometry.ndim}-D grid for a {model.n}-D system")


# Image tables above this many entries fall back to the per-control scan.
TABLE_LIMIT = 60_000_000


@lru_cache(maxsize=8)
def _image_table(model: SystemModel, g: GridGeometry, scheme: Scheme, controls: ControlGrid):
    """Located image cells of every unique sample point under every control.

    Returns ``(table, ids)``: ``table[u, p]`` is the flat cell index of
    ``f(point_p, u)`` (``-1`` outside the grid) and ``ids[s, c]`` the point
    index of sample ``s`` of cell ``c``.  Cell corners are grid vertices and
    are shared between neighbouring cells.
    """
    U = controls.points(model.control_bounds)
    centers = g.centers
    if scheme is Scheme.CENTER:
        pts = centers
        ids = np.arange(g.size)[None]
    else:
        vshape = tuple(n + 1 for n in g.cells)
        mesh = np.meshgrid(*(g.edges(d) for d in range(g.ndim)), indexing="ij")
        verts = np.stack([m.ravel() for m in mesh], axis=1)
        cell_idx = np.stack(np.unravel_index(np.arange(g.size), g.cells), axis=1)
        ids = [np.ravel_multi_index(tuple((cell_idx + np.array(bits)).T), vshape)
               for bits in np.ndindex(*(2,) * g.ndim)]
        ids.append(len(verts) + np.arange(g.size))
        ids = np.stack(ids)
        pts = np.concatenate([verts, centers])
    if len(U) * len(pts) > TABLE_LIMIT:
        return None
    table = np.empty((len(U), len(pts)), dtype=np.int32)
    for j, u in enumerate(U):
        table[j] = g.locate(model.apply(pts, u))
    table.setflags(write=False)
    return table, ids


def one_step_set(target: GridSet, mask: GridSet, model: SystemModel, cfg: ReachConfig) -> GridSet:
    """Cells of ``mask`` from which one sampled control reaches ``target``."""
    _check(target, mask, model)
    g = target.geometry
    active = np.flatnonzero(mask.flat)
    if target.is_empty() or active.size == 0:
        return GridSet(g, np.zeros(g.size, dtype=bool))
    if cfg.epsilon == 0:
        cached = _image_table(model, g, cfg.scheme, cfg.controls)
        if cached is not None:
            table, ids = cached
            # Index -1 (outside the grid) picks the trailing False.
            hit = np.append(target.flat, False)[table]
            ok = hit[:, ids[0, active]]
            for row in ids[1:]:
                ok &= hit[:, row[active]]
            result = np.zeros(g.size, dtype=bool)
            result[active] = ok.any(axis=0)
            return GridSet(g, result)
    return _one_step_scan(target, active, model, cfg)


def _one_step_scan(target: GridSet, active: np.ndarray, model: SystemModel, cfg: ReachConfig) -> GridSet:
    g = target.geometry
    result = np.zeros(g.size, dtype=bool)
    pts = sample_points(g, cfg.scheme)[:, active, :]
    S = pts.shape[0]
    tflat = target.flat
    eps = float(cfg.epsilon)
    cover = _BoxCover(target) if eps > 0 else None
    alive = np.arange(active.size)

    for u in cfg.controls.points(model.control_bounds):
        if alive.size == 0:
            break
        y = model.apply(pts[:, alive, :].reshape(-1, g.ndim), u)
        if cover is None:
            i = g.locate(y)
            ok = (i >= 0) & tflat[np.maximum(i, 0)]
        else:
            lo, in_lo = g.cell_index(y - eps)
            hi, in_hi = g.cell_index(y + eps)
            ok = in_lo & in_hi
            ok[ok] = cover.all_true(lo[ok], hi[ok])
        ok = ok.reshape(S, alive.size).all(axis=0)
        result[active[alive[ok]]] = True
        alive = alive[~ok]
    return GridSet(g, result)


def iterated_one_step(target: GridSet, mask: GridSet, j: int, model: SystemModel,
                      cfg: ReachConfig) -> GridSet:
    """``j``-fold application of :func:`one_step_set` with a fixed mask."""
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    s = target
    for _ in range(j):
        s = one_step_set(s, mask, model, cfg)
    return s
