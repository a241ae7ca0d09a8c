import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shiftspace import _accel, kernels

masks = st.lists(st.integers(0, 1), min_size=1, max_size=60).map(lambda v: np.array(v, dtype=np.uint8))
delta_sets = st.lists(st.integers(-5, 5), min_size=1, max_size=5, unique=True).map(lambda v: np.array(v, np.int64))


@given(masks, delta_sets)
def test_dilate_erode_twins_agree(mask, deltas):
    for loop, twin in ((kernels._dilate_loop, kernels._dilate_np), (kernels._erode_loop, kernels._erode_np)):
        a = loop(mask, deltas)
        assert np.array_equal(a, twin(mask, deltas))
        assert np.array_equal(a, _accel.py_func(loop)(mask, deltas))


@given(st.lists(st.integers(-1, 3), min_size=1, max_size=60).map(lambda v: np.array(v, np.int64)), delta_sets)
def test_same_label_twins_agree(labels, deltas):
    a = kernels._same_label_loop(labels, deltas)
    assert np.array_equal(a, kernels._same_label_np(labels, deltas))
    assert np.array_equal(a, _accel.py_func(kernels._same_label_loop)(labels, deltas))


def test_greedy_place_compiled_matches_python():
    allowed = np.ones(40, dtype=np.uint8)
    allowed[17] = 0
    deltas = np.array([0, 1, 2, 0, 1], dtype=np.int64)
    ptr = np.array([0, 3, 5], dtype=np.int64)
    order = np.array([0, 1], dtype=np.int64)
    corners = np.arange(40, dtype=np.int64)
    got = kernels.greedy_place(allowed, np.zeros(40, np.uint8), corners, deltas, ptr, order)
    ref = _accel.py_func(kernels.greedy_place)(allowed, np.zeros(40, np.uint8), corners, deltas, ptr, order)
    assert all(np.array_equal(a, b) for a, b in zip(got, ref))
    assert 17 not in {int(c) + d for c, t in zip(*got) for d in deltas[ptr[t]:ptr[t + 1]]}


_PROBE = """
import json
from shiftspace import _accel
from shiftspace.geometry import box, interval
from shiftspace.patterns import count_patterns, enumerate_patterns, golden_mean, forbid_run
from shiftspace.suite import _hard_square
from shiftspace.tiling import TileSet, exterior, greedy_maximal
hs = _hard_square()
gm = golden_mean()
T = greedy_maximal(TileSet.boxes(hs.ctx, [[3, 3], [2, 2]]), box(hs.ctx, [11, 9]))
print(json.dumps({
    "backend": _accel.backend(),
    "gm": enumerate_patterns(gm, interval(0, 9)).rows.tolist(),
    "run": count_patterns(forbid_run(3), interval(0, 11), method="enumerate"),
    "hs": count_patterns(hs, box(hs.ctx, [3, 4])),
    "tiling": T.to_json(),
    "ext": exterior(T, 1).ext.tolist(),
}, sort_keys=True))
"""


def _probe(flag: str) -> dict:
    env = dict(os.environ, SHIFTSPACE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", _PROBE], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


@pytest.mark.slow
def test_backends_produce_identical_results():
    fast, slow = _probe("1"), _probe("0")
    assert slow.pop("backend") == "python"
    fast.pop("backend")
    assert fast == slow


def test_numba_switch_reflected():
    assert _accel.backend() == ("numba" if _accel.USE_NUMBA else "python")
