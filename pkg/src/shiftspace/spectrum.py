"""Density-capped SFTs, the one-marker-per-tile shift, the overlay map and the level spectrum."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .entropy import (BoundCertificate, low_level_bound, marker_bound, sparse_pattern_count, spacing_bound,
                      _eps_fraction)
from .geometry import FiniteRegion
from .patterns import (Alphabet, Pattern, PatternError, PatternSet, SFT, ShiftSpec, SupportCap, check_gluing,
                       count_patterns, enumerate_patterns)
from .tiling import QuasiTiling, TileSet, compatibility_check, greedy_maximal, tileset_invariance

CHECK_LIMIT = 1 << 22
TOL = 1e-9


class SpectrumError(ValueError):
    pass


# --------------------------------------------------------------------------
# density levels


@dataclass(frozen=True)
class DensitySFT:
    alphabet: Alphabet
    R: TileSet
    level: int
    spec: SFT

    @property
    def largest(self) -> int:
        return max(len(t) for t in self.R.tiles)

    @property
    def caps(self) -> tuple[int, ...]:
        """Non-zero cap per tile, floor(j |R_i| / |R_1|)."""
        return tuple(self.level * len(t) // self.largest for t in self.R.tiles)

    def block_bound(self) -> float:
        """max_i log |X^j_{R_i}| / |R_i|, the entropy bound of an exact tiling by R."""
        a = self.alphabet.size
        return max(math.log(sparse_pattern_count(a, len(t), c)) / len(t) for t, c in zip(self.R.tiles, self.caps))


def density_sft(alphabet: Alphabet, R: TileSet, j: int) -> DensitySFT:
    """Configurations with at most floor(j |R_i| / |R_1|) non-zeros on every translate of every R_i."""
    n1 = max(len(t) for t in R.tiles)
    if not isinstance(j, (int, np.integer)) or not 0 <= j <= n1:
        raise SpectrumError(f"level j={j} outside [0, {n1}]")
    caps = []
    for t in R.tiles:
        cap = int(j) * len(t) // n1
        if cap < len(t):
            caps.append(SupportCap(t, cap))
    spec = SFT(R.ctx, alphabet, (), tuple(caps), name=f"density level {int(j)}/{n1}")
    return DensitySFT(alphabet, R, int(j), spec)


# --------------------------------------------------------------------------
# marker shift


@dataclass
class MarkerShift:
    """Window patterns with at most one non-zero on each translate of a fixed tiling; free elsewhere."""

    alphabet: Alphabet
    tiling: QuasiTiling
    per_tile: list
    count: int
    estimate: float
    bound: BoundCertificate

    @property
    def window(self) -> FiniteRegion:
        return self.tiling.window

    @property
    def passed(self) -> bool:
        return self.estimate <= self.bound.bound + TOL

    def _translate_cols(self) -> list[np.ndarray]:
        W = self.window
        return [W.indices_of(self.tiling.tileset.tiles[i].points + c)
                for c, i in zip(self.tiling.corners, self.tiling.tile_idx)]

    def contains_rows(self, rows: np.ndarray) -> np.ndarray:
        nz = np.asarray(rows) != self.alphabet.zero_index
        ok = np.ones(nz.shape[0], dtype=bool)
        for cols in self._translate_cols():
            ok &= nz[:, cols].sum(axis=1) <= 1
        return ok

    def patterns(self, limit: int = CHECK_LIMIT) -> PatternSet:
        if self.count > limit:
            raise PatternError(f"{self.count} marker patterns exceed the limit {limit}")
        W = self.window
        k, z = self.alphabet.size, self.alphabet.zero_index
        rows = np.zeros((1, len(W)), dtype=np.int8)
        covered = np.zeros(len(W), dtype=bool)
        nonzero = [s for s in range(k) if s != z]
        for cols in self._translate_cols():
            covered[cols] = True
            opts = [np.zeros(len(cols), np.int8)]
            for p in range(len(cols)):
                for s in nonzero:
                    o = np.zeros(len(cols), np.int8)
                    o[p] = s
                    opts.append(o)
            rows = _product_rows(rows, cols, np.array(opts, dtype=np.int8))
        for c in np.flatnonzero(~covered):
            rows = _product_rows(rows, np.array([c]), np.arange(k, dtype=np.int8)[:, None])
        return PatternSet(W, rows, self.alphabet)

    def to_json(self) -> dict:
        return {"window_size": len(self.window), "translates": len(self.tiling), "per_tile": self.per_tile,
                "count": self.count, "estimate": self.estimate, "bound": self.bound.to_json(),
                "passed": self.passed}


def _product_rows(rows: np.ndarray, cols: np.ndarray, opts: np.ndarray) -> np.ndarray:
    out = np.repeat(rows, opts.shape[0], axis=0)
    out[:, cols] = np.tile(opts, (rows.shape[0], 1))
    return out


def marker_shift(alphabet: Alphabet, T: TileSet, window: FiniteRegion, tiling: QuasiTiling | None = None) -> MarkerShift:
    if len(window) == 0:
        raise SpectrumError("window too small: empty")
    tiling = greedy_maximal(T, window) if tiling is None else tiling
    a = alphabet.size
    per_tile = [1 + len(t) * (a - 1) for t in T.tiles]
    count = a ** int(np.count_nonzero(tiling.owner < 0))
    for i in tiling.tile_idx:
        count *= per_tile[int(i)]
    eps = Fraction(1, min(len(t) for t in T.tiles))
    return MarkerShift(alphabet, tiling, per_tile, count, math.log(count) / len(window),
                       marker_bound(a, float(eps)))


# --------------------------------------------------------------------------
# overlay


def overlay(x: Pattern, y: Pattern, zero: int = 0) -> Pattern:
    """x where x is non-zero, y elsewhere."""
    if x.support != y.support:
        raise SpectrumError("overlay needs patterns on the same support")
    return Pattern(x.support, overlay_rows(x.values, y.values, zero))


def overlay_rows(x: np.ndarray, y: np.ndarray, zero: int = 0) -> np.ndarray:
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise SpectrumError("overlay needs rows of equal shape")
    return np.where(x != zero, x, y).astype(np.int8)


def split_one_per_translate(rows: np.ndarray, translates: Sequence[np.ndarray], zero: int = 0):
    """Move the first non-zero of every translate from ``rows`` into a marker row; returns (x, y)."""
    x = np.array(rows, dtype=np.int8, copy=True)
    y = np.full_like(x, zero)
    at = np.arange(x.shape[0])
    for cols in translates:
        sub = x[:, cols] != zero
        has = sub.any(axis=1)
        first = cols[np.argmax(sub, axis=1)]
        y[at[has], first[has]] = x[at[has], first[has]]
        x[at[has], first[has]] = zero
    return x, y


# --------------------------------------------------------------------------
# spectrum


@dataclass
class SpectrumReport:
    alphabet_size: int
    largest_tile: int
    eps: float
    window_size: int
    check_window_size: int
    levels: list
    delta: BoundCertificate
    marker: dict
    premises: dict
    failures: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def max_gap(self) -> float:
        gaps = [lv["gap"] for lv in self.levels if lv["gap"] is not None]
        return max(gaps) if gaps else 0.0

    @property
    def estimates(self) -> list[float]:
        return [lv["estimate"] for lv in self.levels]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "count", "estimate", "gap", "bound"])
        for lv in self.levels:
            gap = "" if lv["gap"] is None else repr(lv["gap"])
            w.writerow([lv["level"], lv["count"], repr(lv["estimate"]), gap, repr(self.delta.bound)])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"alphabet_size": self.alphabet_size, "largest_tile": self.largest_tile, "eps": self.eps,
                "window_size": self.window_size, "check_window_size": self.check_window_size,
                "levels": self.levels, "max_gap": self.max_gap, "delta": self.delta.to_json(),
                "marker": self.marker, "premises": self.premises, "failures": self.failures,
                "notes": self.notes, "passed": self.passed}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)


def spectrum(alphabet: Alphabet, R: TileSet, T: TileSet, eps: float, window: FiniteRegion,
             check_window: FiniteRegion | None = None) -> SpectrumReport:
    """Estimates of every density level on ``window`` plus clause checks (a)-(d).

    (a) nesting of consecutive levels, (b) exact endpoints, (c) for
    j/|R_1| > 3 eps every pattern of level j splits as an overlay of a level
    j-1 pattern and a marker pattern, (d) consecutive gaps at most delta(eps).
    Levels at or below the threshold are checked against the low-level bound.
    Pattern sets are enumerated on ``check_window`` (default ``window``).
    """
    if not 0 < eps <= 1:
        raise SpectrumError("eps must lie in (0, 1]")
    if R.ctx != T.ctx or R.ctx.dimension != window.dimension:
        raise SpectrumError("tile sets and window must share the group")
    C = window if check_window is None else check_window
    a = alphabet.size
    if a ** len(C) > CHECK_LIMIT:
        raise SpectrumError(f"check window of {len(C)} cells is too large; pass a smaller check_window")
    n1 = max(len(t) for t in R.tiles)
    e = _eps_fraction(eps)
    delta = spacing_bound(a, eps)
    failures = []

    tiling = greedy_maximal(T, C)
    translates = [C.indices_of(T.tiles[i].points + c) for c, i in zip(tiling.corners, tiling.tile_idx)]
    mk = marker_shift(alphabet, T, C, tiling)
    if not mk.passed:
        failures.append({"level": None, "clause": "marker", "detail": "marker estimate above its bound"})

    levels = []
    prev_set = None
    for j in range(n1 + 1):
        ds = density_sft(alphabet, R, j)
        count = count_patterns(ds.spec, window)
        est = math.log(count) / len(window)
        row = {"level": j, "caps": list(ds.caps), "count": count, "estimate": est,
               "block_bound": ds.block_bound(), "gap": None, "nested": None, "overlay": None,
               "low_level_bound": None}
        if levels:
            row["gap"] = est - levels[-1]["estimate"]
            if row["gap"] > delta.bound + TOL:
                failures.append({"level": j, "clause": "d", "detail": f"gap {row['gap']:.6f} > delta"})
        cur = enumerate_patterns(ds.spec, C)
        if prev_set is not None:
            row["nested"] = prev_set.issubset(cur)
            if not row["nested"]:
                failures.append({"level": j, "clause": "a", "detail": "level j-1 patterns not contained"})
        if j >= 1 and Fraction(j, n1) > 3 * e:
            x, y = split_one_per_translate(cur.rows, translates, alphabet.zero_index)
            ok = prev_set.contains_rows(x) & mk.contains_rows(y)
            ok &= np.all(overlay_rows(x, y, alphabet.zero_index) == cur.rows, axis=1)
            row["overlay"] = bool(ok.all())
            if not row["overlay"]:
                bad = int(np.flatnonzero(~ok)[0])
                failures.append({"level": j, "clause": "c",
                                 "detail": f"no split for pattern {cur.rows[bad].tolist()}"})
        else:
            cert = low_level_bound(a, j, n1, eps)
            row["low_level_bound"] = cert.bound
            if est > cert.bound + TOL:
                failures.append({"level": j, "clause": "low-level bound",
                                 "detail": f"estimate {est:.6f} > {cert.bound:.6f}"})
        levels.append(row)
        prev_set = cur

    if levels[0]["count"] != 1:
        failures.append({"level": 0, "clause": "b", "detail": "level 0 is not the zero pattern alone"})
    if levels[-1]["count"] != a ** len(window):
        failures.append({"level": n1, "clause": "b", "detail": "top level is not the full shift"})

    premises = {
        "tile_sizes": all(len(t) * e >= 1 for t in R.tiles + T.tiles),
        "R_invariance": tileset_invariance(R, max(T.radius, 1), eps),
        "compatibility": None,
    }
    try:
        v = compatibility_check(tiling, R, eps)
        premises["compatibility"] = {"passed": v.passed, "worst_ratio": v.worst_ratio, "tested": v.tested}
    except Exception as exc:  # window too small for a test translate
        premises["compatibility"] = {"passed": None, "detail": str(exc)}
    for row in premises["R_invariance"]:
        row["rho"] = float(row["rho"])

    notes = ["level constraints slide over every translate of every tile",
             "premise checks are reported, not enforced"]
    return SpectrumReport(a, n1, float(eps), len(window), len(C), levels, delta, mk.to_json(), premises,
                          failures, notes)


# --------------------------------------------------------------------------
# isolation premises


@dataclass
class IsolationReport:
    c: float
    r: int
    finite_type: bool
    gluing: list
    bracket: list
    notes: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return (self.finite_type and all(g["passed"] for g in self.gluing)
                and all(b["holds"] for b in self.bracket))

    @property
    def status(self) -> str:
        return "premises certified" if self.certified else "premises not certified"

    def to_json(self) -> dict:
        return {"c": self.c, "r": self.r, "finite_type": self.finite_type, "gluing": self.gluing,
                "bracket": self.bracket, "certified": self.certified, "status": self.status,
                "notes": self.notes}


def isolation_premises(spec: ShiftSpec, c: float, r: int, windows: Sequence[FiniteRegion],
                       margin: int | None = None) -> IsolationReport:
    """Finite type, gluing at radius r on each window, and an entropy bracket around c.

    For a box window F the bracket is log|X_F| / prod(side + r) <= h <= log|X_F| / |F|;
    the lower end relies on the gluing property holding beyond the tested pairs.
    Isolation itself is never asserted.
    """
    if not spec.is_sft:
        raise SpectrumError("isolation premises need a shift of finite type")
    if r < 1:
        raise SpectrumError("r must be positive")
    if not windows:
        raise SpectrumError("no windows given")
    m = max(1, spec.default_margin() if margin is None else int(margin))
    gluing, bracket = [], []
    for k, W in enumerate(windows):
        lo_pt, hi_pt = W.points.min(axis=0), W.points.max(axis=0)
        shift = np.zeros(W.dimension, dtype=np.int64)
        shift[0] = int(hi_pt[0] - lo_pt[0]) + r + 1
        v = check_gluing(spec, r, W, W.translate(shift), m)
        gluing.append({"window": k, **v.to_json(spec.alphabet)})
        count = count_patterns(spec, W, m)
        upper = math.log(count) / len(W) if count else float("-inf")
        sides = hi_pt - lo_pt + 1
        is_box = int(np.prod(sides)) == len(W)
        lower = math.log(count) / float(np.prod(sides + r)) if (count and is_box) else None
        holds = upper >= c - TOL and (lower is None or lower <= c + TOL)
        bracket.append({"window": k, "size": len(W), "count": count, "lower": lower, "upper": upper,
                        "holds": bool(holds)})
    notes = ["isolation is a topological conclusion and is not asserted",
             "gluing is tested on one translated pair per window"]
    return IsolationReport(float(c), int(r), True, gluing, bracket, notes)
