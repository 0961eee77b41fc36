import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stlmon.gridset import (
    GeometryMismatch, GridGeometry, GridSet, Mode, count, difference, intersect, is_empty,
    member, rasterize, union,
)
from stlmon.stl import TRUE, And, Box, Not, Or, contains

G500 = GridGeometry([(0, 5)], [500])


def test_raster_unit_interval():
    s = rasterize(Box(0, 0, 1), G500, Mode.INNER)
    assert np.flatnonzero(s.flat).tolist() == list(range(100))
    assert s.intervals() == [(0.0, 1.0)]


def test_raster_true():
    for mode in Mode:
        assert rasterize(TRUE, G500, mode) == G500.full()


def test_raster_intersection_example():
    s = rasterize(And.of(Box(0, 3, 5), Box(0, 0, 4)), G500)
    assert s.intervals() == [(3.0, 4.0)]


def test_raster_off_grid_edges():
    s_in = rasterize(Box(0, 1.005, 2.995), G500, Mode.INNER)
    s_out = rasterize(Box(0, 1.005, 2.995), G500, Mode.OUTER)
    assert s_in.intervals() == [(1.01, 2.99)]
    assert s_out.intervals() == [(1.0, 3.0)]


def test_raster_negation_flips_mode():
    r = Box(0, 1.005, 2.995)
    assert rasterize(Not(r), G500, Mode.INNER) == ~rasterize(r, G500, Mode.OUTER)


def test_raster_dimension_error():
    with pytest.raises(ValueError):
        rasterize(Box(1, 0, 1), G500)


def test_member_examples():
    x11 = rasterize(Box(0, 0, 2.788), G500)
    assert not member(x11, 3.2)
    assert member(x11, 2.5)
    assert not member(G500.full(), 6.0)
    g2 = GridGeometry([(0, 10), (0, 6)], [200, 120])
    x7 = rasterize(And.of(Box(0, 6.1, 9.9), Box(1, 0.2, 3.8)), g2)
    assert member(x7, (8.0, 3.5))
    with pytest.raises(ValueError):
        member(x7, 8.0)


def test_cell_boundaries():
    g = GridGeometry([(0, 1)], [4])
    assert g.locate([[0.25], [0.5], [1.0], [0.0], [-1e-3], [1.001]]).tolist() == [1, 2, 3, 0, -1, -1]
    # Binary-inexact boundaries still go to the upper cell.
    g = GridGeometry([(0, 5)], [500])
    assert g.locate([[0.29], [2.79]]).tolist() == [29, 279]


def test_set_algebra_examples():
    s = rasterize(Box(0, 1, 3), G500)
    assert intersect(s, G500.full()) == s
    assert union(s, ~s) == G500.full()
    assert intersect(s, rasterize(Box(0, 0, 4.6), G500)) == s
    assert difference(s, s).is_empty() and is_empty(G500.empty())
    assert count(s) == 200


def test_geometry_mismatch():
    a = GridGeometry([(0, 5)], [50]).full()
    with pytest.raises(GeometryMismatch):
        a & G500.full()


def test_geometry_validation():
    with pytest.raises(ValueError):
        GridGeometry([(0, 5)], [0])
    with pytest.raises(ValueError):
        GridGeometry([(1, 1)], [5])


def test_bounding_box():
    g2 = GridGeometry([(0, 10), (0, 6)], [200, 120])
    s = rasterize(And.of(Box(0, 7, 9), Box(1, 1, 3)), g2)
    assert s.bounding_box() == pytest.approx([(7, 9), (1, 3)])
    assert g2.empty().bounding_box() is None


# --------------------------------------------------------------------------
# Properties

coord = st.integers(-4, 44).map(lambda i: i / 8)


@st.composite
def regions(draw, ndim, depth=2):
    if depth == 0 or draw(st.booleans()):
        lo = draw(coord)
        hi = lo + draw(st.integers(0, 30)) / 8
        return Box(draw(st.integers(0, ndim - 1)), lo, hi)
    kind = draw(st.sampled_from(["not", "and", "or"]))
    if kind == "not":
        return Not(draw(regions(ndim, depth - 1)))
    args = draw(st.lists(regions(ndim, depth - 1), min_size=2, max_size=3))
    return And.of(*args) if kind == "and" else Or.of(*args)


geometries = st.sampled_from([
    GridGeometry([(0, 5)], [7]),
    GridGeometry([(0, 5)], [40]),
    GridGeometry([(0, 5), (0, 3)], [9, 6]),
    GridGeometry([(0, 5), (0, 3)], [10, 12]),
])


@settings(max_examples=500, deadline=None)
@given(st.data())
def test_inner_subset_outer(data):
    g = data.draw(geometries)
    r = data.draw(regions(g.ndim))
    assert rasterize(r, g, Mode.INNER) <= rasterize(r, g, Mode.OUTER)


@settings(max_examples=500, deadline=None)
@given(st.data(), st.integers(0, 2**32 - 1))
def test_inner_soundness(data, seed):
    g = data.draw(geometries)
    r = data.draw(regions(g.ndim))
    s = rasterize(r, g, Mode.INNER)
    o = rasterize(r, g, Mode.OUTER)
    pts = np.random.default_rng(seed).uniform(g.lo, g.hi, size=(200, g.ndim))
    inside = np.asarray(contains(r, pts))
    assert not np.any(s.members(pts) & ~inside)
    assert not np.any(inside & ~o.members(pts))


@settings(max_examples=500, deadline=None)
@given(st.data())
def test_modes_coincide_on_aligned_boxes(data):
    g = GridGeometry([(0, 5), (0, 3)], [10, 12])
    lo0, hi0 = sorted(data.draw(st.lists(st.integers(0, 10), min_size=2, max_size=2)))
    lo1, hi1 = sorted(data.draw(st.lists(st.integers(0, 12), min_size=2, max_size=2)))
    r = And.of(Box(0, lo0 / 2, hi0 / 2), Box(1, lo1 / 4, hi1 / 4))
    if lo0 == hi0 or lo1 == hi1:
        return  # degenerate boxes have measure zero
    assert rasterize(r, g, Mode.INNER) == rasterize(r, g, Mode.OUTER)


masks = st.integers(0, 2**32 - 1).map(
    lambda seed: GridSet(GridGeometry([(0, 1), (0, 1)], [6, 5]),
                         np.random.default_rng(seed).random(30) < 0.5))


@settings(max_examples=500, deadline=None)
@given(masks, masks, masks)
def test_lattice_laws(a, b, c):
    assert (a & b) & c == a & (b & c)
    assert (a | b) | c == a | (b | c)
    assert ~(a & b) == ~a | ~b
    assert ~(a | b) == ~a & ~b
    assert a & (b | c) == (a & b) | (a & c)
    assert a - b == a & ~b
    assert (a & b) <= a <= (a | b)
    assert count(a | b) + count(a & b) == count(a) + count(b)
