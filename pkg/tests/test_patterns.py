import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shiftspace.geometry import FiniteRegion, GroupContext, box, interval
from shiftspace.patterns import (SFT, Alphabet, BlockCode, Factor, Pattern, PatternError, PatternLimitError,
                                 PatternSet, Product, SupportCap, check_gluing, count_patterns, enumerate_patterns,
                                 forbid_run, full_shift, golden_mean, singleton, spec_from_json, spec_to_json,
                                 transfer_matrix_count, two_constant)
from shiftspace.suite import _hard_square

from oracles import admissible_2d, brute_count_1d, fib, forbidden_free, projected_words_1d, words

GM = golden_mean()


def test_full_shift_three_sites():
    assert len(enumerate_patterns(full_shift(2), interval(0, 3))) == 8


def test_golden_mean_small_windows():
    X = enumerate_patterns(GM, interval(0, 3))
    assert len(X) == 5
    expected = sorted(w for w in words(2, 3) if forbidden_free(w, [(1, 1)]))
    assert [tuple(r) for r in X.rows.tolist()] == expected
    assert len(enumerate_patterns(GM, interval(0, 10))) == 144
    assert count_patterns(GM, interval(0, 1)) == 2
    assert count_patterns(GM, interval(0, 4)) == 8


@pytest.mark.parametrize("n", range(1, 15))
def test_golden_mean_matches_brute_force(n):
    assert count_patterns(GM, interval(0, n), method="enumerate") == brute_count_1d(2, n, [(1, 1)]) == fib(n + 2)


def test_product_counts_multiply():
    P = Product(GM, full_shift(2))
    assert count_patterns(P, interval(0, 2)) == 12
    assert len(enumerate_patterns(P, interval(0, 2))) == 12
    assert count_patterns(Product(GM, GM), interval(0, 6)) == fib(8) ** 2


def test_product_rows_are_canonical():
    X = enumerate_patterns(Product(GM, two_constant()), interval(0, 3))
    assert np.array_equal(X.rows, np.unique(X.rows, axis=0))


def test_factor_counts_bounded_by_source():
    # xor of neighbours on the golden mean
    ctx = GroupContext(1)
    code = BlockCode.from_function(ctx, Alphabet.binary(), Alphabet.binary(), 1, lambda t: t[0] ^ t[2])
    Y = Factor(GM, code)
    for n in (3, 5, 8):
        F = interval(0, n)
        assert count_patterns(Y, F) <= count_patterns(GM, interval(-1, n + 1))


def test_factor_identity_code_reproduces_source():
    ctx = GroupContext(1)
    code = BlockCode.from_function(ctx, Alphabet.binary(), Alphabet.binary(), 0, lambda t: t[0])
    assert enumerate_patterns(Factor(GM, code), interval(0, 6)) == enumerate_patterns(GM, interval(0, 6))


def test_factor_alphabet_mismatch():
    ctx = GroupContext(1)
    code = BlockCode.from_function(ctx, Alphabet.of_size(3), Alphabet.binary(), 0, lambda t: t[0] % 2)
    with pytest.raises(PatternError):
        Factor(GM, code)


forbidden_words = st.lists(st.lists(st.integers(0, 1), min_size=2, max_size=3).map(tuple), min_size=1, max_size=3)


@settings(max_examples=40)
@given(forbidden_words, st.integers(1, 6))
def test_random_sft_matches_projection_oracle(forb, n):
    spec = SFT(GroupContext(1), Alphabet.binary(), tuple(Pattern.word(list(f)) for f in forb))
    m = spec.default_margin()
    X = enumerate_patterns(spec, interval(0, n), m)
    assert {tuple(r) for r in X.rows.tolist()} == projected_words_1d(2, n, m, forb)


@settings(max_examples=40)
@given(forbidden_words, st.integers(13, 30))
def test_transfer_matrix_equals_enumeration(forb, n):
    spec = SFT(GroupContext(1), Alphabet.binary(), tuple(Pattern.word(list(f)) for f in forb))
    F = interval(0, n)
    assert transfer_matrix_count(spec, F) == count_patterns(spec, F, method="enumerate")


def test_transfer_matrix_with_caps():
    cap = SupportCap(interval(0, 5), 2)
    spec = SFT(GroupContext(1), Alphabet.binary(), (), (cap,))
    for n in (13, 16):
        F = interval(0, n)
        assert count_patterns(spec, F, method="transfer") == count_patterns(spec, F, method="enumerate")


def test_caps_agree_with_explicit_forbidden_patterns():
    cap = SupportCap(interval(0, 4), 1)
    a = SFT(GroupContext(1), Alphabet.binary(), (), (cap,))
    b = SFT(GroupContext(1), Alphabet.binary(), a.explicit_forbidden())
    for n in range(1, 9):
        assert enumerate_patterns(a, interval(0, n)) == enumerate_patterns(b, interval(0, n))


def test_hard_square_matches_2d_oracle():
    hs = _hard_square()
    forb = [{(0, 0): 1, (0, 1): 1}, {(0, 0): 1, (1, 0): 1}]
    for h, w in [(2, 2), (2, 3), (3, 3)]:
        brute = sum(admissible_2d(np.array(v).reshape(h, w), forb) for v in words(2, h * w))
        assert count_patterns(hs, box(hs.ctx, [h, w])) == brute


def test_monotone_in_window_and_restriction():
    small, big = interval(0, 5), interval(-2, 9)
    Xs, Xb = enumerate_patterns(GM, small), enumerate_patterns(GM, big)
    assert len(Xs) <= len(Xb)
    assert Xb.restrict(small).issubset(Xs)


def test_singleton_and_empty_projection():
    assert count_patterns(singleton(3), interval(0, 7)) == 1
    # 1 and 0 each forced to be followed by the other and preceded by itself
    contra = SFT(GroupContext(1), Alphabet.binary(), (Pattern.word([0]), Pattern.word([1])))
    assert count_patterns(contra, interval(0, 3)) == 0
    assert len(enumerate_patterns(contra, interval(0, 3))) == 0


def test_pattern_limit_is_enforced():
    with pytest.raises(PatternLimitError):
        enumerate_patterns(full_shift(2), interval(0, 20), limit=1000)


def test_pattern_set_membership():
    X = enumerate_patterns(GM, interval(0, 4))
    assert Pattern.word([1, 0, 1, 0]) in X
    assert Pattern.word([1, 1, 0, 0]) not in X
    assert Pattern.word([1, 0, 1]) not in X
    hits = X.contains_rows(np.array([[0, 0, 0, 0], [0, 1, 1, 0]]))
    assert hits.tolist() == [True, False]


def test_pattern_set_wide_support_falls_back_to_bytes():
    F = interval(0, 70)
    rows = np.zeros((2, 70), dtype=np.int8)
    rows[1, 3] = 1
    S = PatternSet(F, rows, Alphabet.binary())
    probe = np.zeros((2, 70), dtype=np.int8)
    probe[0, 4] = 1
    assert S.contains_rows(probe).tolist() == [False, True]


def test_gluing_examples():
    one, three = FiniteRegion([[0]]), FiniteRegion([[2]])
    assert check_gluing(GM, 1, one, three, 3).passed
    v = check_gluing(two_constant(), 5, FiniteRegion([[0]]), FiniteRegion([[10]]), 5)
    assert not v.passed
    x, y = v.counterexample
    assert x.values[0] != y.values[0]
    assert check_gluing(full_shift(2), 2, interval(0, 3), interval(6, 9), 1).passed
    with pytest.raises(PatternError, match="gap"):
        check_gluing(GM, 2, one, three, 3)


def test_gluing_blind_when_margins_do_not_meet():
    # dilations of {0} and {6} by 2 are disjoint, so nothing links the two constants
    v = check_gluing(two_constant(), 5, FiniteRegion([[0]]), FiniteRegion([[6]]), 2)
    assert v.passed
    assert not check_gluing(two_constant(), 5, FiniteRegion([[0]]), FiniteRegion([[6]]), 3).passed


def test_gluing_agrees_with_brute_force_run_sft():
    # no 111: any two blocks glue across a gap of two free cells
    spec = forbid_run(3)
    v = check_gluing(spec, 2, interval(0, 3), interval(5, 8), 4)
    assert v.passed
    assert v.count_joint == v.count_K * v.count_H


@pytest.mark.parametrize("spec", [GM, two_constant(), full_shift(3), forbid_run(4), _hard_square(),
                                  Product(GM, full_shift(2))], ids=lambda s: type(s).__name__)
def test_spec_json_roundtrip(spec):
    again = spec_from_json(json.loads(json.dumps(spec_to_json(spec))))
    F = interval(0, 5) if spec.dimension == 1 else box(spec.ctx, [2, 3])
    assert enumerate_patterns(again, F) == enumerate_patterns(spec, F)


def test_factor_json_roundtrip():
    ctx = GroupContext(1)
    code = BlockCode.from_function(ctx, Alphabet.binary(), Alphabet.binary(), 1, lambda t: t[0] & t[2])
    Y = Factor(GM, code)
    again = spec_from_json(json.loads(json.dumps(spec_to_json(Y))))
    assert enumerate_patterns(again, interval(0, 6)) == enumerate_patterns(Y, interval(0, 6))


def test_data_files_parse():
    from pathlib import Path
    for p in sorted(Path(__file__).resolve().parents[1].joinpath("data").glob("*.json")):
        obj = json.loads(p.read_text())
        if isinstance(obj, dict) and "kind" in obj:
            spec_from_json(obj)


def test_invalid_specs():
    with pytest.raises(PatternError):
        Alphabet(())
    with pytest.raises(PatternError):
        Alphabet((0, 1), zero=5)
    with pytest.raises(PatternError):
        SFT(GroupContext(1), Alphabet.binary(), (Pattern.word([2]),))
