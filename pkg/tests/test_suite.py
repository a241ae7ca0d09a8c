import numpy as np
import pytest
from hypothesis import given, strategies as st

from shiftspace.geometry import box
from shiftspace.suite import (_hard_square, counting_suite, exhaustive_sparse_count, random_cover, tiling_vs_direct,
                              union_bound_covers)

from oracles import sparse_words


@given(st.integers(2, 3), st.integers(0, 10), st.integers(0, 10))
def test_exhaustive_sparse_count_matches_binomial_sum(a, n, m):
    assert exhaustive_sparse_count(a, n, m) == sparse_words(a, n, m)


@given(st.integers(0, 10 ** 6), st.integers(2, 5))
def test_random_cover_covers(seed, parts):
    K = box(_hard_square().ctx, [3, 4])
    cover = random_cover(np.random.default_rng(seed), K, parts)
    union = cover[0]
    for piece in cover[1:]:
        union = union.union(piece)
    assert union == K


def test_union_bound_and_tiling_sections():
    assert union_bound_covers(seed=7, runs=30)["violations"] == 0
    tv = tiling_vs_direct()
    assert tv["violations"] == 0
    last = tv["rows"][-1]
    assert last["n"] == 100
    assert last["bound"] == pytest.approx(0.4970, abs=5e-5)
    assert last["direct"] == pytest.approx(0.4828, abs=5e-5)


def test_suite_is_seeded():
    a, b = counting_suite(seed=3, runs=12), counting_suite(seed=3, runs=12)
    assert a.passed and a.to_json() == b.to_json()
