"""Finite-window entropy estimates and certified combinatorial upper bounds.

All logarithms are natural; values are in nats per site.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .geometry import FiniteRegion
from .patterns import PatternLimitError, ShiftSpec, count_patterns, enumerate_patterns

REL_TOL = 1e-12
NEG_INF = float("-inf")


class BoundError(ValueError):
    pass


@dataclass(frozen=True)
class EntropyEstimate:
    window: FiniteRegion
    count: int
    value: float
    flag: str = ""

    @property
    def size(self) -> int:
        return len(self.window)

    @property
    def empty(self) -> bool:
        return self.count == 0

    def row(self, window_id=0, bound: float | None = None) -> dict:
        return {"window_id": window_id, "size": self.size, "count": self.count,
                "estimate": self.value, "bound": "" if bound is None else bound}


def entropy_estimate(spec: ShiftSpec, F: FiniteRegion, margin: int | None = None) -> EntropyEstimate:
    """(1/|F|) log |X_F|; a count of zero yields -inf with the flag 'empty window projection'."""
    if len(F) == 0:
        raise BoundError("window must be nonempty")
    c = count_patterns(spec, F, margin)
    if c == 0:
        return EntropyEstimate(F, 0, NEG_INF, "empty window projection")
    return EntropyEstimate(F, c, math.log(c) / len(F))


@dataclass(frozen=True)
class CurveReport:
    estimates: tuple[EntropyEstimate, ...]

    @property
    def values(self) -> list[float]:
        return [e.value for e in self.estimates]

    @property
    def last(self) -> float:
        return self.estimates[-1].value

    @property
    def tail_spread(self) -> float:
        """max - min over the last half of the curve."""
        vals = self.values
        tail = vals[len(vals) // 2:] or vals
        return max(tail) - min(tail)

    def to_csv(self) -> str:
        return estimates_to_csv(self.estimates)


def entropy_curve(spec: ShiftSpec, windows: Sequence[FiniteRegion], margin: int | None = None) -> CurveReport:
    if not windows:
        raise BoundError("no windows given")
    return CurveReport(tuple(entropy_estimate(spec, F, margin) for F in windows))


def estimates_to_csv(estimates: Iterable[EntropyEstimate], bounds: Sequence[float] | None = None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["window_id", "size", "count", "estimate", "bound"], lineterminator="\n")
    w.writeheader()
    for i, e in enumerate(estimates):
        w.writerow(e.row(i, None if bounds is None else bounds[i]))
    return buf.getvalue()


# --------------------------------------------------------------------------
# certificates


def _eps_fraction(eps) -> Fraction:
    if isinstance(eps, Fraction):
        return eps
    return Fraction(str(eps)) if isinstance(eps, float) else Fraction(eps)


def _sparse_count(a: int, eps, n: int) -> tuple[int, Fraction]:
    e = _eps_fraction(eps)
    exponent = math.ceil(e * n)
    return exponent, Fraction(3 * a) / e


def _sparse_count_value(inputs: dict) -> float:
    exponent, base = _sparse_count(inputs["alphabet_size"], inputs["eps"], inputs["n"])
    return exponent * math.log(base)


def _formula_sparse_entropy(inputs: dict) -> float:
    e = float(inputs["eps"])
    return e * math.log(3 * inputs["alphabet_size"] / e)


def _formula_tiling(inputs: dict) -> float:
    return inputs["log_p"] + math.log(inputs["alphabet_size"]) * inputs["uncovered_fraction"]


def _formula_qp(inputs: dict) -> float:
    r = inputs["r"]
    return inputs["hQ"] + (2.0 / r) * math.log(3 * r)


def _formula_spacing(inputs: dict) -> float:
    e = float(inputs["eps"])
    a = inputs["alphabet_size"]
    return 3 * e * math.log(a / e) + e * math.log(a)


def _formula_marker(inputs: dict) -> float:
    e = float(inputs["eps"])
    return 2 * e * math.log(inputs["alphabet_size"] / e)


def _formula_low_level(inputs: dict) -> float:
    a, j, n1, e = inputs["alphabet_size"], inputs["level"], inputs["largest_tile"], float(inputs["eps"])
    head = 0.0 if j == 0 else (j / n1) * math.log(3 * a * n1 / j)
    return head + e * math.log(a)


_FORMULAS = {
    "sparse_count": _sparse_count_value,  # stored in log form, see BoundCertificate.log_bound
    "sparse_entropy": _formula_sparse_entropy,
    "tiling": _formula_tiling,
    "qp": _formula_qp,
    "spacing": _formula_spacing,
    "marker": _formula_marker,
    "low_level": _formula_low_level,
}


@dataclass(frozen=True)
class BoundCertificate:
    """An upper bound together with the inputs needed to recompute it.

    For ``sparse_count`` the bound is a pattern count (exact integer when the
    base is integral); every other kind is an entropy bound in nats/site.
    """

    kind: str
    inputs: dict
    bound: float
    checks: dict = field(default_factory=dict)

    def recompute(self) -> float:
        if self.kind == "sparse_count":
            return math.exp(_sparse_count_value(self.inputs))
        return _FORMULAS[self.kind](self.inputs)

    def verify(self) -> bool:
        """The stored bound matches its formula and every recorded check holds."""
        again = self.recompute()
        ok = math.isclose(again, float(self.bound), rel_tol=1e-12, abs_tol=1e-300)
        return ok and all(bool(v.get("holds", True)) if isinstance(v, dict) else bool(v)
                          for v in self.checks.values())

    @property
    def log_bound(self) -> float:
        if self.kind == "sparse_count":
            return _sparse_count_value(self.inputs)
        return float(self.bound)

    def to_json(self) -> dict:
        return {"kind": self.kind, "inputs": _json_inputs(self.inputs), "bound": _json_num(self.bound),
                "checks": _json_inputs(self.checks)}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _json_num(x):
    if isinstance(x, Fraction):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, float) and math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return x


def _json_inputs(d):
    if isinstance(d, dict):
        return {str(k): _json_inputs(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_json_inputs(v) for v in d]
    return _json_num(d)


def sparse_count_bound(alphabet_size: int, eps, n: int) -> BoundCertificate:
    """(3|A|/eps)^ceil(eps*n): dominates the patterns on n cells with at most eps*n non-zero symbols."""
    if eps <= 0 or eps > 1:
        raise BoundError("eps must lie in (0, 1]")
    if alphabet_size < 1 or n < 0:
        raise BoundError("alphabet size must be positive and n non-negative")
    exponent, base = _sparse_count(alphabet_size, eps, n)
    value = base ** exponent
    bound = int(value) if value.denominator == 1 else float(value)
    return BoundCertificate("sparse_count", {"alphabet_size": alphabet_size, "eps": eps, "n": n,
                                             "exponent": exponent}, bound)


def sparse_pattern_count(alphabet_size: int, n: int, max_nonzero: int) -> int:
    """Exact number of patterns on n cells with at most ``max_nonzero`` non-zero symbols."""
    return sum(math.comb(n, k) * (alphabet_size - 1) ** k for k in range(min(max_nonzero, n) + 1))


def sparse_entropy_bound(alphabet_size: int, eps) -> BoundCertificate:
    if eps <= 0 or eps > 1:
        raise BoundError("eps must lie in (0, 1]")
    inputs = {"alphabet_size": alphabet_size, "eps": eps}
    return BoundCertificate("sparse_entropy", inputs, _formula_sparse_entropy(inputs))


def spacing_bound(alphabet_size: int, eps) -> BoundCertificate:
    """3 eps log(|A|/eps) + eps log|A|: the admissible gap between consecutive spectrum levels."""
    if eps <= 0 or eps > 1:
        raise BoundError("eps must lie in (0, 1]")
    inputs = {"alphabet_size": alphabet_size, "eps": eps}
    return BoundCertificate("spacing", inputs, _formula_spacing(inputs))


def marker_bound(alphabet_size: int, eps) -> BoundCertificate:
    """2 eps log(|A|/eps): at most one non-zero per tile of size at least 1/eps."""
    if eps <= 0 or eps > 1:
        raise BoundError("eps must lie in (0, 1]")
    inputs = {"alphabet_size": alphabet_size, "eps": eps}
    return BoundCertificate("marker", inputs, _formula_marker(inputs))


def low_level_bound(alphabet_size: int, level: int, largest_tile: int, eps) -> BoundCertificate:
    """(j/|R_1|) log(3|A||R_1|/j) + eps log|A| for a density level j."""
    if not 0 <= level <= largest_tile:
        raise BoundError("level must lie in [0, largest_tile]")
    inputs = {"alphabet_size": alphabet_size, "level": level, "largest_tile": largest_tile, "eps": eps}
    return BoundCertificate("low_level", inputs, _formula_low_level(inputs))


def qp_bound(hQ: float, r: int) -> BoundCertificate:
    if r < 1:
        raise BoundError("r must be a positive integer")
    if hQ < 0:
        raise BoundError("hQ must be non-negative")
    inputs = {"hQ": float(hQ), "r": int(r)}
    return BoundCertificate("qp", inputs, _formula_qp(inputs))


def tiling_entropy_bound(spec: ShiftSpec, tileset, tiling, F: FiniteRegion, p: float | None = None, *,
                         log_p: float | None = None, check_limit: int = 400) -> BoundCertificate:
    """log p + log|A| * (uncovered fraction of F), under the per-tile hypothesis |X_T| <= p^|T|.

    When |F| is at most ``check_limit`` the chain |X_E| <= p^|E| and
    |X_F| <= |X_E| |A|^|F \\ E| (E = covered part of F) and the direct estimate
    on F are verified by counting; a failed direct check is recorded, never hidden.
    """
    if (p is None) == (log_p is None):
        raise BoundError("give exactly one of p and log_p")
    lp = math.log(p) if log_p is None else float(log_p)
    tol = 1e-9
    for i, T in enumerate(tileset.tiles):
        c = count_patterns(spec, T)
        if c and math.log(c) > len(T) * lp + tol:
            raise BoundError(f"tile {i} violates |X_T| <= p^|T| ({c} patterns on {len(T)} cells)")
    covered = tiling.covered()
    if not covered.issubset(F):
        raise BoundError("a tile-translate is not contained in F")
    E = covered.intersection(F)
    unc = len(F) - len(E)
    eps_hat = unc / len(F)
    a = spec.alphabet.size
    inputs = {"log_p": lp, "alphabet_size": a, "uncovered_fraction": eps_hat, "window_size": len(F)}
    bound = _formula_tiling(inputs)
    checks: dict = {}
    if len(F) <= check_limit:
        try:
            cF = count_patterns(spec, F)
            cE = count_patterns(spec, E) if len(E) else 1
        except PatternLimitError:
            checks["direct"] = {"holds": True, "skipped": "window too large to count"}
        else:
            lE = math.log(cE) if cE else NEG_INF
            lF = math.log(cF) if cF else NEG_INF
            checks["covered_part"] = {"holds": lE <= len(E) * lp + tol, "log_count": lE, "log_bound": len(E) * lp}
            checks["window_vs_covered"] = {"holds": lF <= lE + unc * math.log(a) + tol,
                                           "log_count": lF, "log_bound": lE + unc * math.log(a)}
            est = lF / len(F)
            checks["direct_estimate"] = {"holds": est <= bound + tol, "estimate": est}
    return BoundCertificate("tiling", inputs, bound, checks)


# --------------------------------------------------------------------------
# upper semicontinuity


@dataclass
class SemicontinuityReport:
    status: str
    agreement_index: int | None
    limit_estimate: float
    eps: float
    uncovered_fraction: float
    rows: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.status == "certified"

    def to_json(self) -> dict:
        return _json_inputs({"status": self.status, "agreement_index": self.agreement_index,
                             "limit_estimate": self.limit_estimate, "eps": self.eps,
                             "uncovered_fraction": self.uncovered_fraction, "rows": self.rows})


def semicontinuity_check(sequence: Sequence[ShiftSpec], limit: ShiftSpec, tileset, eps: float,
                         F: FiniteRegion, limit_window: FiniteRegion | None = None) -> SemicontinuityReport:
    """Window-wise check of est(X^n, F) <= est(X, W) + eps + log|A| * eps_hat for n past agreement.

    ``eps_hat`` is the uncovered fraction of the greedy tiling of F; W is
    ``limit_window`` (default F).  The chain behind the inequality is
    |X^n_F| <= prod |X^n_T| |A|^uncovered, where the tile counts equal those of
    the limit once the sequence agrees with it on every tile.
    """
    from .tiling import greedy_maximal

    W = F if limit_window is None else limit_window
    est_lim = entropy_estimate(limit, W).value
    for i, T in enumerate(tileset.tiles):
        c = count_patterns(limit, T)
        if c and math.log(c) / len(T) > est_lim + eps + 1e-12:
            raise BoundError(f"tile {i}: per-tile entropy exceeds the limit estimate plus eps")
    tiles_lim = [enumerate_patterns(limit, T) for T in tileset.tiles]
    agree = []
    for X in sequence:
        agree.append(all(enumerate_patterns(X, T) == ref for T, ref in zip(tileset.tiles, tiles_lim)))
    N = None
    for i in range(len(agree)):
        if all(agree[i:]):
            N = i
            break
    tiling = greedy_maximal(tileset, F)
    eps_hat = 1.0 - len(tiling.covered()) / len(F)
    a = limit.alphabet.size
    report = SemicontinuityReport("not yet converged on tiles", N, est_lim, eps, eps_hat)
    if N is None:
        return report
    bound = est_lim + eps + math.log(a) * eps_hat
    ok = True
    for i in range(N, len(sequence)):
        est = entropy_estimate(sequence[i], F).value
        holds = est <= bound + 1e-12
        ok &= holds
        report.rows.append({"index": i, "estimate": est, "bound": bound, "margin": bound - est, "holds": holds})
    report.status = "certified" if ok else "violated"
    return report


__all__ = [
    "BoundCertificate", "BoundError", "CurveReport", "EntropyEstimate", "SemicontinuityReport",
    "entropy_curve", "entropy_estimate", "estimates_to_csv", "qp_bound", "semicontinuity_check",
    "spacing_bound", "sparse_count_bound", "sparse_entropy_bound", "sparse_pattern_count",
    "tiling_entropy_bound",
]
