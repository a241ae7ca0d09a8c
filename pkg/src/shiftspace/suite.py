"""Exhaustive and randomised checks of the combinatorial counting bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .entropy import _eps_fraction, sparse_count_bound, sparse_pattern_count, tiling_entropy_bound
from .geometry import FiniteRegion, GroupContext, box, interval
from .patterns import SFT, Alphabet, Pattern, count_patterns, full_shift, golden_mean, two_constant
from .tiling import TileSet, greedy_maximal

SPARSE_ALPHABETS = (2, 3)
SPARSE_EPS = (0.1, 0.2, 0.5)
SPARSE_MAX_N = 14


@dataclass
class SuiteReport:
    sections: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(s["violations"] == 0 for s in self.sections.values())

    def to_json(self) -> dict:
        return {"sections": self.sections, "passed": self.passed}


def exhaustive_sparse_count(a: int, n: int, max_nonzero: int) -> int:
    """Words of length n over a symbols (0 is zero) with at most max_nonzero non-zeros, by listing them all."""
    nz = np.zeros(1, dtype=np.int64)
    for _ in range(n):
        # every word extends by a zero or by one of a - 1 non-zeros
        nz = np.concatenate([nz, np.repeat(nz + 1, a - 1)])
    return int(np.count_nonzero(nz <= max_nonzero))


def sparse_grid(alphabets=SPARSE_ALPHABETS, eps_values=SPARSE_EPS, max_n: int = SPARSE_MAX_N) -> dict:
    rows, violations = [], 0
    for a in alphabets:
        for eps in eps_values:
            e = _eps_fraction(eps)
            for n in range(1, max_n + 1):
                m = math.floor(e * n)
                count = exhaustive_sparse_count(a, n, m)
                cert = sparse_count_bound(a, eps, n)
                formula = sparse_pattern_count(a, n, m)
                ok = count == formula and math.log(count) <= cert.log_bound + 1e-12
                violations += not ok
                rows.append({"alphabet_size": a, "eps": eps, "n": n, "max_nonzero": m, "count": count,
                             "bound": cert.bound, "holds": ok})
    return {"checks": len(rows), "violations": violations, "rows": rows}


def _hard_square() -> SFT:
    ctx = GroupContext(2)
    forb = (Pattern.from_mapping({(0, 0): 1, (0, 1): 1}), Pattern.from_mapping({(0, 0): 1, (1, 0): 1}))
    return SFT(ctx, Alphabet.binary(), forb, name="hard square")


def random_cover(rng: np.random.Generator, K: FiniteRegion, parts: int) -> list[FiniteRegion]:
    """Random labelling of K into ``parts`` pieces, each grown by a few extra cells of K."""
    lab = rng.integers(0, parts, size=len(K))
    out = []
    for p in range(parts):
        keep = lab == p
        extra = rng.random(len(K)) < 0.15
        sel = keep | extra
        if sel.any():
            out.append(FiniteRegion._from_sorted(K.points[sel]))
    return out


def union_bound_covers(seed: int = 0, runs: int = 100) -> dict:
    rng = np.random.default_rng(seed)
    specs_1d = [golden_mean(), two_constant(), full_shift(2)]
    hs = _hard_square()
    rows, violations = [], 0
    for k in range(runs):
        if k % 2 == 0:
            spec = specs_1d[(k // 2) % len(specs_1d)]
            n = int(rng.integers(4, 13))
            K = interval(0, n)
        else:
            spec = hs
            K = box(hs.ctx, [int(rng.integers(2, 4)), int(rng.integers(2, 5))])
        parts = int(rng.integers(2, 5))
        cover = random_cover(rng, K, parts)
        m = spec.default_margin()
        whole = count_patterns(spec, K, m, method="enumerate")
        prod = 1
        for piece in cover:
            prod *= count_patterns(spec, piece, m, method="enumerate")
        ok = whole <= prod
        violations += not ok
        rows.append({"run": k, "spec": getattr(spec, "name", "") or type(spec).__name__, "size": len(K),
                     "pieces": len(cover), "count": whole, "product": prod, "holds": ok})
    return {"checks": len(rows), "violations": violations, "rows": rows}


def tiling_vs_direct() -> dict:
    """Golden mean, tile [0,10), windows [0,n): the tiling bound never undercuts the direct estimate."""
    spec = golden_mean()
    ts = TileSet.boxes(spec.ctx, [10])
    p_log = math.log(count_patterns(spec, ts.tiles[0])) / 10
    rows, violations = [], 0
    for n in (20, 37, 50, 73, 100):
        F = interval(0, n)
        T = greedy_maximal(ts, F)
        cert = tiling_entropy_bound(spec, ts, T, F, log_p=p_log)
        direct = math.log(count_patterns(spec, F)) / n
        ok = cert.bound >= direct - 1e-12 and cert.verify()
        violations += not ok
        rows.append({"n": n, "bound": cert.bound, "direct": direct, "holds": ok})
    return {"checks": len(rows), "violations": violations, "rows": rows}


def counting_suite(seed: int = 0, runs: int = 100) -> SuiteReport:
    rep = SuiteReport()
    rep.sections["sparse_count_grid"] = sparse_grid()
    rep.sections["union_bound_covers"] = union_bound_covers(seed, runs)
    rep.sections["tiling_vs_direct"] = tiling_vs_direct()
    return rep
