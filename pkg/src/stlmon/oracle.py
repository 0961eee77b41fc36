"""Ground truth for the other modules.

``eval_trace`` is the Boolean semantics of the fragment on a finite trace.
``brute_force_feasible`` decides feasibility by enumerating every control
sequence over a sampled lattice and evaluating the remaining obligations on
the resulting trace.  Given a grid, states are snapped to cell centers after
each step and regions are tested by inner rasterization, which is the
quantized system the grid-based set recursion describes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .gridset import GridGeometry, GridSet, rasterize
from .reach import ControlGrid
from .stl import Formula, Op, Pred, SegmentedFormula, TemporalAtom, contains
from .system import SystemModel, Trace

__all__ = [
    "TraceTooShort", "BudgetExceeded", "ControlLattice", "DEFAULT_BUDGET",
    "eval_trace", "subsequent_formula", "witness_controls", "brute_force_feasible", "prefix_feasible",
    "oracle_feasible_set",
]

DEFAULT_BUDGET = 10**7

RegionTest = Callable[[Pred, np.ndarray], bool]


class TraceTooShort(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ControlLattice:
    counts: tuple[int, ...]
    budget: int = DEFAULT_BUDGET

    def __init__(self, counts, budget: int = DEFAULT_BUDGET):
        object.__setattr__(self, "counts", ControlGrid(counts).counts)
        object.__setattr__(self, "budget", int(budget))

    def points(self, control_bounds) -> np.ndarray:
        return ControlGrid(self.counts).points(control_bounds)

    def check(self, n_controls: int, length: int):
        cost = n_controls**length * length
        if cost > self.budget:
            raise BudgetExceeded(
                f"{n_controls}^{length} control sequences x {length} steps = {cost} > budget {self.budget}")


# --------------------------------------------------------------------------
# Trace semantics


def _span(at: TemporalAtom) -> tuple[int, int]:
    return (0 if at.op is Op.UNTIL else at.a), at.b


def eval_trace(f: Formula, trace: Trace, t: int = 0, region_test: RegionTest | None = None) -> bool:
    """``(trace, t) |= f`` with intervals taken relative to ``t``."""
    test = region_test or (lambda p, x: bool(contains(p, x)))
    lo = t + min(_span(at)[0] for at in f.atoms)
    hi = t + max(_span(at)[1] for at in f.atoms)
    if lo < trace.start or hi > trace.end:
        raise TraceTooShort(f"trace covers [{trace.start}, {trace.end}], formula needs [{lo}, {hi}]")
    memo: dict = {}

    def holds(p: Pred, k: int) -> bool:
        key = (id(p), k)
        if key not in memo:
            memo[key] = test(p, trace.at(k))
        return memo[key]

    for at in f.atoms:
        a, b = t + at.a, t + at.b
        if at.op is Op.ALWAYS:
            ok = all(holds(at.regions[0], k) for k in range(a, b + 1))
        elif at.op is Op.EVENTUALLY:
            ok = any(holds(at.regions[0], k) for k in range(a, b + 1))
        else:
            h1, h2 = at.regions
            first = t if at.op is Op.UNTIL else a
            ok = any(holds(h2, k2) and all(holds(h1, k1) for k1 in range(first, k2 + 1))
                     for k2 in range(a, b + 1))
        if not ok:
            return False
    return True


# --------------------------------------------------------------------------
# Enumeration


def subsequent_formula(sf: SegmentedFormula, k: int, flags: Sequence[bool] | None = None,
                       exclusive: bool = False) -> list[TemporalAtom]:
    """Obligations left at instant ``k``.

    The active segment is restarted at ``k``; it is dropped when
    ``exclusive`` is set, or when it is an F/U' segment whose flag is set.
    """
    i = sf.segment_index(k)
    seg = sf.segments[i]
    drop = exclusive or (seg.op is not Op.ALWAYS and flags is not None and flags[i])
    atoms = [] if drop else [TemporalAtom(seg.op, k, seg.b, seg.regions)]
    atoms.extend(s.as_atom() for s in sf.segments[i + 1:])
    return atoms


class _Quantizer:
    """Snap-to-center dynamics and raster region tests on a grid."""

    def __init__(self, g: GridGeometry):
        self.g = g
        self.rasters: dict[Pred, GridSet] = {}

    def snap(self, x: np.ndarray) -> np.ndarray | None:
        i = self.g.locate(x[None, :])[0]
        return None if i < 0 else self.g.centers[i]

    def test(self, p: Pred, x: np.ndarray) -> bool:
        if p not in self.rasters:
            self.rasters[p] = rasterize(p, self.g)
        return self.rasters[p].member(x)


def _enumerate(model: SystemModel, x0: np.ndarray, length: int, lat: ControlLattice,
               q: _Quantizer | None, accept: Callable[[list[np.ndarray]], bool]) -> np.ndarray | None:
    """First accepted control sequence in lattice order, shape ``(length, m)``, or ``None``."""
    U = lat.points(model.control_bounds)
    lat.check(len(U), length)
    states = [x0]
    used: list[np.ndarray] = []

    def dfs() -> bool:
        if len(states) == length + 1:
            return accept(states)
        x = states[-1]
        for u in U:
            y = model.apply(x[None, :], u)[0]
            y = q.snap(y) if q is not None else (y if model.in_states(y) else None)
            if y is None:
                continue
            states.append(y)
            used.append(u)
            if dfs():
                return True
            states.pop()
            used.pop()
        return False

    if not dfs():
        return None
    return np.array(used, dtype=float).reshape(length, model.m)


def _start(model: SystemModel, x, q: _Quantizer | None) -> np.ndarray | None:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({model.n},)")
    if q is not None:
        return q.snap(x)
    return x if model.in_states(x) else None


def witness_controls(model: SystemModel, sf: SegmentedFormula, k: int, x_k,
                     lat: ControlLattice, prefix_flags: Sequence[bool] | None = None,
                     grid: GridGeometry | None = None, exclusive: bool = False) -> np.ndarray | None:
    """Controls ``u_k..u_{T-1}`` meeting the obligations left at ``k``, or ``None``."""
    T = sf.horizon
    q = _Quantizer(grid) if grid is not None else None
    x = _start(model, x_k, q)
    if x is None:
        return None
    atoms = subsequent_formula(sf, k, prefix_flags, exclusive)
    test = q.test if q is not None else None

    def accept(states):
        if not atoms:
            return True
        return eval_trace(Formula(tuple(atoms)), Trace(k, np.array(states)), 0, test)

    return _enumerate(model, x, T - k, lat, q, accept)


def brute_force_feasible(model: SystemModel, sf: SegmentedFormula, k: int, x_k,
                         lat: ControlLattice, prefix_flags: Sequence[bool] | None = None,
                         grid: GridGeometry | None = None, exclusive: bool = False) -> bool:
    """Whether some lattice control sequence from ``x_k`` meets the obligations left at ``k``."""
    return witness_controls(model, sf, k, x_k, lat, prefix_flags, grid, exclusive) is not None


def prefix_feasible(model: SystemModel, f: Formula, prefix, lat: ControlLattice, horizon: int,
                    grid: GridGeometry | None = None) -> bool:
    """Direct check: does some continuation of ``prefix`` (instants ``0..k``) satisfy ``f``?"""
    pts = np.asarray(prefix.points if isinstance(prefix, Trace) else prefix, dtype=float)
    pts = pts.reshape(len(pts), model.n)
    q = _Quantizer(grid) if grid is not None else None
    x = _start(model, pts[-1], q)
    if x is None:
        return False
    head = pts[:-1]
    test = q.test if q is not None else None

    def accept(states):
        return eval_trace(f, Trace(0, np.concatenate([head, np.array(states)])), 0, test)

    return _enumerate(model, x, max(horizon - (len(pts) - 1), 0), lat, q, accept) is not None


def oracle_feasible_set(model: SystemModel, sf: SegmentedFormula, k: int, g: GridGeometry,
                        lat: ControlLattice, exclusive: bool = False) -> GridSet:
    """Cells whose center passes :func:`brute_force_feasible` on the quantized system."""
    U = lat.points(model.control_bounds)
    lat.check(len(U), sf.horizon - k)
    mask = [brute_force_feasible(model, sf, k, c, lat, grid=g, exclusive=exclusive) for c in g.centers]
    return GridSet(g, np.array(mask))
