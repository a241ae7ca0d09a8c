import itertools

import numpy as np
import pytest

from shiftspace.approximation import (ApproximationError, build_completion, complete, complete_rows, delete, low_entropy_approx,
                                      mask, q_sample, selective_complete)
from shiftspace.geometry import GroupContext, ball, interval
from shiftspace.patterns import (Alphabet, Pattern, SFT, enumerate_patterns, full_shift, golden_mean, singleton)
from shiftspace.tiling import QuasiTiling, TileSet, empty_tiling, exterior, greedy_maximal, prune

Z1 = GroupContext(1)
GM = golden_mean()


def word(s, start=0):
    return Pattern.word([int(c) for c in s], start)


def test_mask_examples():
    y = word("10110")
    e = Pattern.word([1, 0, 0, 1, 1])
    assert mask(y, e, 0) == word("10010")
    assert mask(y, np.ones(5, bool), 0) == y
    assert mask(y, np.zeros(5, bool), 0) == word("00000")
    with pytest.raises(ApproximationError):
        mask(y, np.ones(4, bool), 0)


def test_delete_examples():
    ts = TileSet.boxes(Z1, [10])
    T = QuasiTiling(interval(0, 10), ts, [[0]], [0])
    y = word("1011010011")
    d = delete(y, T, 1, 0)
    assert d == word("1000000001")
    assert d.locality == ts.radius + 1
    assert delete(y, empty_tiling(ts, interval(0, 10)), 1, 0) == y
    z = word("0" * 10)
    assert delete(z, T, 1, 0) == z


def test_completion_examples():
    tab = build_completion(GM, interval(0, 5), 1)
    ext = np.array([1, 0, 0, 0, 1], bool)
    assert tab.lookup(ext, [1, 1]).tolist() == [1, 0, 0, 0, 1]
    anchored = build_completion(GM, interval(0, 5), 1, anchor=word("01010"))
    assert anchored.lookup(ext, [0, 0]).tolist() == [0, 1, 0, 1, 0]
    assert tab.lookup(ext, [0, 0]).tolist() == [0, 0, 0, 0, 0]
    full = build_completion(full_shift(3), interval(0, 4), 1)
    assert full.lookup(np.array([0, 1, 1, 0], bool), [2, 1]).tolist() == [0, 2, 1, 0]
    with pytest.raises(ApproximationError):
        build_completion(GM, interval(0, 5), 1, anchor=word("11000"))


def _brute_least(rows, marking):
    least = {}
    for row in map(tuple, rows):
        key = tuple(v for v, m in zip(row, marking) if m)
        if key not in least or row < least[key]:
            least[key] = row
    return least


def check_table_properties(spec, n):
    """P1-P3 for every marking of the tile [0, n): returns the number of entries checked."""
    tile = interval(0, n)
    tab = build_completion(spec, tile, 1)
    X = enumerate_patterns(spec, tile)
    rows = X.rows
    checked = 0
    for bits in itertools.product((False, True), repeat=n):
        marking = np.array(bits, bool)
        ref = _brute_least(rows.tolist(), bits)
        entries = tab.entries(marking)
        assert set(entries) == set(ref)
        for key, p in entries.items():
            assert p in X                                           # P1
            assert tuple(p.values[marking].tolist()) == key         # P2
            assert tuple(p.values.tolist()) == ref[key]             # canonical least choice
            checked += 1
        # P3: the output only sees exterior values
        for row in rows[:: max(1, len(rows) // 7)]:
            got = tab.lookup(marking, row[marking])
            assert np.array_equal(got, np.array(ref[tuple(row[marking].tolist())]))
    return checked


@pytest.mark.parametrize("n", [1, 4, 7])
def test_table_properties_golden_mean(n):
    assert check_table_properties(GM, n) > 0


def test_table_properties_three_symbols():
    # no two equal neighbours among the non-zero symbols
    forb = (Pattern.word([1, 1]), Pattern.word([2, 2]))
    spec = SFT(Z1, Alphabet.of_size(3), forb)
    assert check_table_properties(spec, 5) > 0


def test_complete_example_and_identity():
    ts = TileSet.boxes(Z1, [5])
    W = interval(-2, 8)
    T = QuasiTiling(W, ts, [[0]], [0])
    tab = build_completion(GM, ts.tiles[0], 1)
    vals = np.zeros(len(W), dtype=np.int8)
    vals[W.indices_of(np.array([[0], [4]]))] = 1
    y = Pattern(W, vals)
    out = complete(y, T, [tab])
    assert out.values[W.indices_of(interval(0, 5).points)].tolist() == [1, 0, 0, 0, 1]
    assert complete(y, empty_tiling(ts, W), [tab]) == y


def delete_complete_violations(n_window, side, offset, check_rows=50):
    """complete(delete(y)) == complete(y) and ext cells kept, for every y in X on [0, n_window)."""
    W = interval(0, n_window)
    ts = TileSet.boxes(Z1, [side])
    G = greedy_maximal(ts, interval(offset, n_window))
    T = QuasiTiling(W, ts, G.corners, G.tile_idx)
    tab = [build_completion(GM, ts.tiles[0], 1)]
    ext = exterior(T, 1).ext
    rows = enumerate_patterns(GM, W).rows
    deleted = np.where(ext, rows, 0).astype(np.int8)
    a = complete_rows(W, deleted, T, tab)
    b = complete_rows(W, rows, T, tab)
    bad = int(np.count_nonzero(np.any(a != b, axis=1)))
    bad += int(np.count_nonzero(np.any(b[:, ext] != rows[:, ext], axis=1)))
    # the batch path agrees with the single-pattern operations
    for k in range(0, len(rows), max(1, len(rows) // check_rows)):
        y = Pattern(W, rows[k])
        bad += complete(delete(y, T, 1, 0), T, tab).values.tolist() != a[k].tolist()
    return bad


@pytest.mark.parametrize("side,offset", [(3, 0), (4, 1), (5, 2)])
def test_complete_after_delete_small_windows(side, offset):
    assert delete_complete_violations(12, side, offset) == 0


def test_selective_complete_examples():
    ts = TileSet.boxes(Z1, [4])
    W = interval(0, 12)
    T = greedy_maximal(ts, W)
    tab = [build_completion(GM, ts.tiles[0], 1)]
    y = Pattern(W, [1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 0, 1])
    assert selective_complete(y, T, T, tab) == complete(y, T, tab)
    assert selective_complete(y, T, empty_tiling(ts, W), tab) == y
    S = prune(T, [(4,)])
    out = selective_complete(y, T, S, tab)
    changed = {int(p[0]) for p in W.points[out.values != y.values]}
    assert changed and changed <= set(range(4, 8))


def test_complete_rejects_partial_translates():
    ts = TileSet.boxes(Z1, [5])
    T = QuasiTiling(interval(0, 10), ts, [[0]], [0])
    tab = [build_completion(GM, ts.tiles[0], 1)]
    with pytest.raises(ApproximationError):
        complete(word("000"), T, tab)


def test_q_sample_has_exterior_witness():
    ts = TileSet.boxes(Z1, [6])
    W = interval(0, 30)
    sample = q_sample(ts, W, 2)
    B = ball(Z1, 2).translate([15])
    assert any(np.all(exterior(T, 2).ext[T.window.indices_of(B.points)]) for T in sample)
    for T in sample:
        T._validate()


def test_low_entropy_full_shift():
    Y, rep = low_entropy_approx(full_shift(2), 1, 0.5, interval(0, 40))
    assert rep.ball_equal and rep.ball_patterns_Y == rep.ball_patterns_X == 8
    assert rep.estimate < 0.5 and rep.passed


def test_low_entropy_singleton():
    Y, rep = low_entropy_approx(singleton(2), 1, 0.3, interval(0, 30))
    assert rep.ball_patterns_Y == 1 and rep.estimate == 0.0
