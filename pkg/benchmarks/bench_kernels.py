"""Time the hot paths with numba on and off (``SHIFTSPACE_NUMBA=0``).

Each backend runs in its own interpreter; the first call of every case is a
warm-up (JIT compilation) and is not timed.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
from __future__ import annotations

import argparse
import json
import os
import statistics
import subprocess
import sys
import time

CASES = {
    "enumerate golden mean [0,16)": (
        "from shiftspace.patterns import enumerate_patterns, golden_mean; from shiftspace.geometry import interval",
        "enumerate_patterns(golden_mean(), interval(0, 16))"),
    "count hard square 4x5": (
        "from shiftspace.patterns import count_patterns; from shiftspace.geometry import box;"
        "from shiftspace.suite import _hard_square; hs = _hard_square()",
        "count_patterns(hs, box(hs.ctx, [4, 5]))"),
    "greedy tiling 150x150": (
        "from shiftspace.tiling import TileSet, greedy_maximal; from shiftspace.geometry import GroupContext, box;"
        "ctx = GroupContext(2); ts = TileSet.boxes(ctx, [[5, 5], [3, 3], [2, 2]]); W = box(ctx, [150, 150])",
        "greedy_maximal(ts, W)"),
    "exterior labelling 150x150, r=2": (
        "from shiftspace.tiling import TileSet, greedy_maximal, exterior; from shiftspace.geometry import GroupContext, box;"
        "ctx = GroupContext(2); ts = TileSet.boxes(ctx, [[5, 5], [3, 3]]); T = greedy_maximal(ts, box(ctx, [150, 150]))",
        "exterior(T, 2)"),
    "density level 4 count on [0,12)": (
        "from shiftspace.spectrum import density_sft; from shiftspace.tiling import TileSet;"
        "from shiftspace.patterns import Alphabet, count_patterns; from shiftspace.geometry import GroupContext, interval;"
        "spec = density_sft(Alphabet.binary(), TileSet.boxes(GroupContext(1), [10]), 4).spec",
        "count_patterns(spec, interval(0, 12), method='enumerate')"),
}

_CHILD = """
import json, sys, time
cases = json.loads(sys.argv[1]); repeat = int(sys.argv[2])
from shiftspace import _accel
out = {"backend": _accel.backend()}
for name, (setup, stmt) in cases.items():
    env = {}
    exec(setup, env)
    exec(stmt, env)
    times = []
    for _ in range(repeat):
        t = time.perf_counter(); exec(stmt, env); times.append(time.perf_counter() - t)
    out[name] = times
print(json.dumps(out))
"""


def run_backend(flag: str, repeat: int) -> dict:
    env = dict(os.environ, SHIFTSPACE_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", _CHILD, json.dumps(CASES), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    t0 = time.perf_counter()
    fast, slow = run_backend("1", args.repeat), run_backend("0", args.repeat)
    width = max(map(len, CASES))
    print(f"{'case':<{width}}  {fast['backend']:>10}  {slow['backend']:>10}  speed-up")
    for name in CASES:
        a, b = statistics.median(fast[name]), statistics.median(slow[name])
        print(f"{name:<{width}}  {a * 1e3:8.2f}ms  {b * 1e3:8.2f}ms  {b / a:7.1f}x")
    print(f"(median of {args.repeat}; total wall time {time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
