import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shiftspace.geometry import FiniteRegion, GroupContext, box, interval
from shiftspace.tiling import (QuasiTiling, TileSet, TilingError, certify_tileset, combine, compatibility_check,
                               empty_tiling, error_count, error_density, exterior, greedy_maximal, hierarchy_tiling,
                               is_maximal, prune, qp_entropy_bound, render_svg, tileset_invariance)

Z1, Z2 = GroupContext(1), GroupContext(2)


def brute_greedy(tiles, window):
    """Reference greedy: lexicographic corners, larger tiles first, plain Python sets."""
    W = {tuple(p) for p in window.points.tolist()}
    order = sorted(range(len(tiles)), key=lambda i: (-len(tiles[i]), i))
    taken, out = set(), []
    for c in sorted(W):
        for i in order:
            cells = {tuple(a + b for a, b in zip(c, t)) for t in tiles[i]}
            if cells <= W and not cells & taken:
                taken |= cells
                out.append((c, i))
                break
    return out


def brute_maximal(T):
    W = {tuple(p) for p in T.window.points.tolist()}
    taken = {tuple(p) for p in T.covered().points.tolist()}
    for c in W:
        for t in T.tileset.tiles:
            cells = {tuple(a + b for a, b in zip(c, p)) for p in t.points.tolist()}
            if cells <= W and not cells & taken:
                return False
    return True


def test_invariance_examples():
    assert tileset_invariance(TileSet.boxes(Z1, [10]), 1, 0.5)[0]["rho"] == Fraction(2, 5)
    v = tileset_invariance(TileSet(Z1, (FiniteRegion([[0]]),)), 1, 0.5)[0]
    assert v["rho"] == 3 and not v["passed"]
    v = tileset_invariance(TileSet.boxes(Z2, [[10, 10]]), 1, 0.8)[0]
    assert v["rho"] == Fraction(76, 100) and v["passed"]


def test_greedy_examples():
    T = greedy_maximal(TileSet.boxes(Z1, [3]), interval(0, 20))
    assert T.corner_set() == {(c,) for c in (0, 3, 6, 9, 12, 15)}
    assert {tuple(p) for p in T.uncovered().points.tolist()} == {(18,), (19,)}
    assert error_count(T) == 2
    assert error_density(T) == (0.1, 0.2)
    T5 = greedy_maximal(TileSet.boxes(Z1, [5]), interval(0, 5))
    assert T5.placements == [((0,), 0)] and error_count(T5) == 0
    T2 = greedy_maximal(TileSet.boxes(Z2, [[3, 3]]), box(Z2, [10, 10]))
    assert len(T2) == 9 and error_count(T2) == 19
    assert T2.corner_set() == {(a, b) for a in (0, 3, 6) for b in (0, 3, 6)}


random_windows = st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)), min_size=1, max_size=40)


@settings(max_examples=50)
@given(random_windows)
def test_greedy_matches_reference_and_is_maximal(cells):
    W = FiniteRegion(cells)
    tiles = TileSet.boxes(Z2, [[2, 2], [1, 2], [1, 1]])
    T = greedy_maximal(tiles, W)
    assert T.placements == brute_greedy([t.points.tolist() for t in tiles.tiles], W)
    assert is_maximal(T) and brute_maximal(T)
    T._validate()


def test_combine_examples():
    ts = TileSet.boxes(Z1, [3])
    W = interval(0, 10)
    T = QuasiTiling(W, ts, [[0]], [0])
    S = QuasiTiling(W, ts, [[1], [5]], [0, 0])
    assert combine(T, S).corner_set() == {(0,), (5,)}
    assert combine(empty_tiling(ts, W), S).corner_set() == S.corner_set()
    assert combine(T, T).corner_set() == T.corner_set()


@pytest.mark.parametrize("seed", range(100))
def test_combine_random_pairs(seed):
    rng = np.random.default_rng(seed)
    W = interval(0, 40)
    A = TileSet.boxes(Z1, [int(rng.integers(2, 7))])
    B = TileSet.boxes(Z1, [int(rng.integers(2, 7))])
    T = prune(greedy_maximal(A, W), [c for c in greedy_maximal(A, W).corner_set() if rng.random() < 0.5])
    shift = int(rng.integers(0, 4))
    Sb = greedy_maximal(B, interval(shift, 40))
    S = QuasiTiling(W, B, Sb.corners, Sb.tile_idx)
    C = combine(T, S)
    C._validate()
    assert T.is_sub_tiling_of(C)
    assert combine(C, S) == C


def test_prune_examples():
    T = greedy_maximal(TileSet.boxes(Z1, [3]), interval(0, 20))
    assert prune(T, T.corner_set()) == T
    assert len(prune(T, [])) == 0
    P = prune(greedy_maximal(TileSet.boxes(Z1, [3]), interval(0, 9)), [(3,)])
    assert P.placements == [((3,), 0)]
    assert error_count(prune(T, [(0,)])) >= error_count(T)
    with pytest.raises(TilingError):
        prune(T, [(1,)])


def test_exterior_examples():
    ts = TileSet.boxes(Z1, [10])
    T = QuasiTiling(interval(-3, 13), ts, [[0]], [0])
    lab = exterior(T, 1)
    inside = {tuple(p) for p in lab.interior().points.tolist()}
    assert inside == {(i,) for i in range(1, 9)}
    assert lab.is_ext(0) and lab.is_ext(9)
    E = exterior(empty_tiling(ts, interval(0, 5)), 1)
    assert E.density() == 1.0
    T2 = QuasiTiling(box(Z2, [10, 10]), TileSet.boxes(Z2, [[10, 10]]), [[0, 0]], [0])
    lab2 = exterior(T2, 1)
    assert len(lab2.interior()) == 64 and lab2.density() == 0.36


@given(st.integers(1, 3), st.integers(1, 3))
def test_exterior_monotone_in_r(r1, r2):
    lo, hi = sorted((r1, r2))
    T = greedy_maximal(TileSet.boxes(Z2, [[3, 4], [2, 2]]), box(Z2, [9, 11]))
    assert np.all(exterior(T, lo).ext <= exterior(T, hi).ext)


def test_qp_examples():
    assert qp_entropy_bound(0, 10).bound == pytest.approx(0.6802, abs=5e-5)
    assert qp_entropy_bound(0.1, 100).bound == pytest.approx(0.2141, abs=5e-5)
    assert qp_entropy_bound(0, 10 ** 6).bound < 1e-4


def test_compatibility_examples():
    R = TileSet.boxes(Z1, [30])
    exact = greedy_maximal(TileSet.boxes(Z1, [3]), interval(0, 99))
    v = compatibility_check(exact, R, 0.05)
    assert v.passed and v.worst_ratio == 0
    v = compatibility_check(empty_tiling(TileSet.boxes(Z1, [3]), interval(0, 100)), R, 0.5)
    assert not v.passed and v.worst_ratio == 1
    T = greedy_maximal(TileSet.boxes(Z1, [3]), interval(0, 100))
    assert compatibility_check(T, R, 0.1).passed


def test_certify_examples():
    rep = certify_tileset(TileSet.boxes(Z1, [20]), 0.1, [interval(0, 20 * k) for k in (2, 4, 8)])
    assert rep.passed, rep.failure
    rep2 = certify_tileset(TileSet.boxes(Z2, [[4, 4]]), 0.3, [box(Z2, [4 * k, 4 * k]) for k in (2, 3)],
                           gluing=False)
    assert rep2.passed and all(w["error_density"] == 0 for w in rep2.windows)
    gappy = TileSet(Z1, (FiniteRegion([[0], [2]]),))
    rep3 = certify_tileset(gappy, 0.01, [interval(0, 30)], gluing=False)
    assert not rep3.passed and rep3.failure["clause"] == "error density"


def test_hierarchy_tiling_is_disjoint():
    T = hierarchy_tiling(Z2, box(Z2, [21, 17]), 2, levels=3)
    T._validate()
    assert error_count(T) < len(T.window) * 0.2


def test_json_roundtrip_and_svg():
    T = greedy_maximal(TileSet.boxes(Z2, [[3, 3], [2, 2]]), box(Z2, [8, 7]))
    assert QuasiTiling.from_json(json.loads(json.dumps(T.to_json()))) == T
    svg = render_svg(T)
    assert svg.startswith("<svg") and svg.count("<rect") >= len(T)
    assert render_svg(greedy_maximal(TileSet.boxes(Z1, [3]), interval(0, 20))).startswith("<svg")


def test_invalid_tilings():
    ts = TileSet.boxes(Z1, [3])
    with pytest.raises(TilingError, match="overlap"):
        QuasiTiling(interval(0, 10), ts, [[0], [2]], [0, 0])
    with pytest.raises(TilingError, match="leaves"):
        QuasiTiling(interval(0, 10), ts, [[8]], [0])
    with pytest.raises(TilingError):
        TileSet(Z1, (FiniteRegion([[1], [2]]),))
