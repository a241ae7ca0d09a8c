from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shiftspace.geometry import (FiniteRegion, GeometryError, GroupContext, ball, boundary, boundary_ratio, box,
                                 dilate, erode, interval, is_invariant, radius_of)

from oracles import boundary_oracle, l1_ball

Z1, Z2 = GroupContext(1), GroupContext(2)


def pts(F):
    return {tuple(p) for p in F.points.tolist()}


@pytest.mark.parametrize("d,r,size", [(1, 2, 5), (2, 1, 5), (2, 2, 13), (3, 2, 25)])
def test_ball_sizes(d, r, size):
    B = ball(GroupContext(d), r)
    assert len(B) == size
    assert pts(B) == l1_ball(d, r)


def test_ball_contains_identity_and_is_symmetric():
    B = ball(Z2, 3)
    assert (0, 0) in B
    assert pts(B) == {tuple(-c for c in p) for p in pts(B)}


def test_boundary_examples():
    assert pts(boundary(Z1, interval(0, 10), 1)) == {(-1,), (0,), (9,), (10,)}
    assert pts(boundary(Z1, FiniteRegion([[0]]), 1)) == {(-1,), (0,), (1,)}
    assert len(boundary(Z2, box(Z2, [10, 10]), 1)) == 76


def test_boundary_ratio_examples():
    assert boundary_ratio(Z1, interval(0, 10), 1) == Fraction(4, 10)
    assert boundary_ratio(Z2, box(Z2, [10, 10]), 1) == Fraction(76, 100)
    assert is_invariant(Z1, interval(0, 10), 1, 0.4)
    assert not is_invariant(Z1, interval(0, 10), 1, 0.39)


def test_empty_region_errors():
    with pytest.raises(GeometryError, match="empty region"):
        boundary(Z1, FiniteRegion(np.zeros((0, 1), dtype=np.int64)), 1)


def test_box_examples():
    assert len(box(Z2, [3, 3], [0, 0])) == 9
    assert pts(box(Z1, [10], [5])) == {(i,) for i in range(5, 15)}
    assert pts(box(Z2, [1, 1], [2, 3])) == {(2, 3)}
    with pytest.raises(GeometryError):
        box(Z2, [3])


def test_boxes_are_folner():
    ratios = [boundary_ratio(Z2, box(Z2, [L, L]), 1) for L in (5, 10, 20, 40)]
    assert all(a > b for a, b in zip(ratios, ratios[1:]))


regions_2d = st.lists(st.tuples(st.integers(-4, 4), st.integers(-4, 4)), min_size=1, max_size=14)


@given(regions_2d, st.integers(1, 2))
def test_boundary_matches_oracle(cells, r):
    F = FiniteRegion(cells)
    assert pts(boundary(Z2, F, r)) == boundary_oracle(set(cells), r, 2)


@given(regions_2d, st.integers(1, 2), st.tuples(st.integers(-9, 9), st.integers(-9, 9)))
def test_boundary_ratio_translation_invariant(cells, r, v):
    F = FiniteRegion(cells)
    assert boundary_ratio(Z2, F, r) == boundary_ratio(Z2, F.translate(v), r)


@given(regions_2d, st.integers(1, 2))
def test_boundary_inside_dilation_and_erosion_inside_region(cells, r):
    F = FiniteRegion(cells)
    assert boundary(Z2, F, r).issubset(dilate(Z2, F, r))
    assert erode(Z2, F, r).issubset(F)


def test_custom_generators_metric():
    # king moves on Z^2: balls are squares
    gens = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)]
    ctx = GroupContext(2, tuple(gens))
    assert len(ball(ctx, 1)) == 9
    assert ctx.distance((0, 0), (3, -2)) == 3
    assert ctx.distance((1, 1), (4, -1)) == ctx.distance((0, 0), (3, -2))


def test_generators_must_be_symmetric_and_generate():
    with pytest.raises(GeometryError):
        GroupContext(1, ((1,),))
    with pytest.raises(GeometryError):
        GroupContext(1, ((2,), (-2,)))


def test_region_json_roundtrip_and_order():
    F = FiniteRegion([(2, 1), (0, 5), (0, 1), (2, 1)])
    assert len(F) == 3
    assert F.points.tolist() == [[0, 1], [0, 5], [2, 1]]
    assert FiniteRegion.from_json(F.to_json()) == F
    assert GroupContext.from_json(Z2.to_json()) == Z2


def test_radius_of_tile():
    assert radius_of(Z1, interval(0, 10).points) == 9
