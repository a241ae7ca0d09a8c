"""Shift spaces given by finite data, and exact pattern enumeration on finite windows.

A shift is described by a ``ShiftSpec``: the full shift, an SFT (forbidden
patterns, optionally support caps), a product, or a sliding-block-code factor.
``enumerate_patterns`` returns the window projection X_F, computed as the set
of restrictions to F of the locally admissible patterns on F dilated by a
margin (default: twice the window radius).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .geometry import FiniteRegion, GeometryError, GroupContext, dilate, radius_of

MAX_SYMBOLS = 127
DEFAULT_PATTERN_LIMIT = 8_000_000


class PatternError(ValueError):
    pass


class PatternLimitError(PatternError):
    """Raised when a window projection is too large to materialise."""


# --------------------------------------------------------------------------
# alphabets and patterns


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple
    zero: object = None

    def __post_init__(self):
        syms = tuple(self.symbols)
        if not syms:
            raise PatternError("alphabet must be nonempty")
        if len(set(syms)) != len(syms):
            raise PatternError("alphabet symbols must be distinct")
        if len(syms) > MAX_SYMBOLS:
            raise PatternError(f"at most {MAX_SYMBOLS} symbols supported")
        zero = syms[0] if self.zero is None else self.zero
        if zero not in syms:
            raise PatternError(f"distinguished zero {zero!r} is not a symbol")
        object.__setattr__(self, "symbols", syms)
        object.__setattr__(self, "zero", zero)

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def size(self) -> int:
        return len(self.symbols)

    @cached_property
    def _lookup(self) -> dict:
        return {s: i for i, s in enumerate(self.symbols)}

    def index(self, symbol) -> int:
        try:
            return self._lookup[symbol]
        except KeyError:
            raise PatternError(f"unknown symbol {symbol!r}") from None

    @property
    def zero_index(self) -> int:
        return self._lookup[self.zero]

    @classmethod
    def binary(cls) -> "Alphabet":
        return cls((0, 1), 0)

    @classmethod
    def of_size(cls, n: int) -> "Alphabet":
        return cls(tuple(range(n)), 0)


class Pattern:
    """A finite configuration: symbol indices on a support region."""

    __slots__ = ("support", "values", "locality", "_hash")

    def __init__(self, support: FiniteRegion, values, locality: int | None = None):
        vals = np.asarray(values, dtype=np.int8).reshape(-1)
        if vals.shape[0] != len(support):
            raise PatternError(f"{vals.shape[0]} values for a support of {len(support)} points")
        vals = vals.copy()
        vals.setflags(write=False)
        self.support = support
        self.values = vals
        self.locality = locality
        self._hash = None

    @classmethod
    def from_mapping(cls, mapping: dict, dimension: int | None = None) -> "Pattern":
        items = sorted((tuple(np.atleast_1d(k).tolist()), v) for k, v in mapping.items())
        support = FiniteRegion([k for k, _ in items], dimension)
        return cls(support, [v for _, v in items])

    @classmethod
    def word(cls, symbols: Sequence[int], start: int = 0) -> "Pattern":
        """A pattern on the Z-interval [start, start + len)."""
        from .geometry import interval

        return cls(interval(start, start + len(symbols)), symbols)

    def __len__(self) -> int:
        return len(self.support)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pattern):
            return NotImplemented
        return self.support == other.support and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.support, self.values.tobytes()))
        return self._hash

    def __repr__(self) -> str:
        if self.support.dimension == 1 and len(self) <= 40:
            lo = int(self.support.points[0, 0]) if len(self) else 0
            return f"Pattern(@{lo}: {''.join(map(str, self.values.tolist()))})"
        return f"Pattern({len(self)} cells in Z^{self.support.dimension})"

    def value_at(self, g) -> int:
        return int(self.values[self.support.index[tuple(int(c) for c in np.atleast_1d(g))]])

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.values.tolist()))

    def restrict(self, region: FiniteRegion) -> "Pattern":
        idx = self.support.indices_of(region.points)
        if np.any(idx < 0):
            raise PatternError("restriction region is not inside the support")
        return Pattern(region, self.values[idx])

    def translate(self, v) -> "Pattern":
        return Pattern(self.support.translate(v), self.values)

    def nonzero_count(self, zero: int) -> int:
        return int(np.count_nonzero(self.values != zero))

    def to_json(self, alphabet: Alphabet | None = None) -> dict:
        vals = self.values.tolist()
        if alphabet is not None:
            vals = [_jsonable(alphabet.symbols[v]) for v in vals]
        return {"support": self.support.to_json(), "values": vals}

    @classmethod
    def from_json(cls, obj: dict, alphabet: Alphabet | None = None, dimension: int | None = None) -> "Pattern":
        support_raw = obj["support"]
        vals = obj["values"]
        if alphabet is not None:
            vals = [alphabet.index(_symbol_key(v)) for v in vals]
        pts = [[p] if isinstance(p, int) else list(p) for p in support_raw]
        if len(pts) != len(vals):
            raise PatternError("support and values differ in length")
        order = sorted(range(len(pts)), key=lambda i: pts[i])
        if len({tuple(p) for p in pts}) != len(pts):
            raise PatternError("duplicate support point")
        support = FiniteRegion([pts[i] for i in order], dimension)
        return cls(support, [vals[i] for i in order])


def _jsonable(sym):
    if isinstance(sym, tuple):
        return [_jsonable(s) for s in sym]
    if isinstance(sym, np.integer):
        return int(sym)
    return sym


def _symbol_key(sym):
    if isinstance(sym, list):
        return tuple(_symbol_key(s) for s in sym)
    return sym


class PatternSet:
    """Lexicographically ordered, duplicate-free set of patterns on one support."""

    def __init__(self, support: FiniteRegion, rows: np.ndarray, alphabet: Alphabet, *, _sorted: bool = False):
        rows = np.asarray(rows, dtype=np.int8).reshape(-1, len(support))
        if not _sorted and rows.shape[0] > 1:
            rows = np.unique(rows, axis=0) if rows.shape[1] else rows[:1]
        rows.setflags(write=False)
        self.support = support
        self.rows = rows
        self.alphabet = alphabet

    def __len__(self) -> int:
        return self.rows.shape[0]

    def __iter__(self) -> Iterator[Pattern]:
        for row in self.rows:
            yield Pattern(self.support, row)

    def __getitem__(self, i: int) -> Pattern:
        return Pattern(self.support, self.rows[i])

    def __repr__(self) -> str:
        return f"PatternSet({len(self)} patterns on {len(self.support)} cells)"

    @cached_property
    def _keys(self) -> set:
        return {r.tobytes() for r in self.rows}

    def __contains__(self, p: Pattern) -> bool:
        if p.support != self.support:
            return False
        return bool(self.contains_rows(p.values)[0])

    @cached_property
    def _radix(self) -> np.ndarray | None:
        n, k = len(self.support), max(self.alphabet.size, 2)
        if n * math.log2(k) >= 62:
            return None
        return k ** np.arange(n - 1, -1, -1, dtype=np.int64)

    @cached_property
    def _codes(self) -> np.ndarray:
        return np.sort(self.rows.astype(np.int64) @ self._radix)

    def contains_rows(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int8).reshape(-1, len(self.support))
        if self._radix is None:
            keys = self._keys
            return np.array([r.tobytes() in keys for r in rows], dtype=bool)
        if len(self) == 0:
            return np.zeros(rows.shape[0], dtype=bool)
        q = rows.astype(np.int64) @ self._radix
        pos = np.minimum(np.searchsorted(self._codes, q), len(self) - 1)
        return self._codes[pos] == q

    def issubset(self, other: "PatternSet") -> bool:
        if self.support != other.support:
            raise PatternError("pattern sets live on different supports")
        return bool(np.all(other.contains_rows(self.rows)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PatternSet):
            return NotImplemented
        return self.support == other.support and np.array_equal(self.rows, other.rows)

    def restrict(self, region: FiniteRegion) -> "PatternSet":
        idx = self.support.indices_of(region.points)
        if np.any(idx < 0):
            raise PatternError("restriction region is not inside the support")
        return PatternSet(region, self.rows[:, idx], self.alphabet)

    def to_json(self) -> dict:
        return {"support": self.support.to_json(),
                "patterns": [[_jsonable(self.alphabet.symbols[v]) for v in r] for r in self.rows.tolist()]}


# --------------------------------------------------------------------------
# block codes


class BlockCode:
    """Sliding block code: the symbol at g is ``rule`` of the source pattern on g.B_w.

    The rule is stored as a table indexed by the mixed-radix code of the source
    symbol indices on B_w (lexicographic order of B_w, first point most
    significant).
    """

    def __init__(self, ctx: GroupContext, source: Alphabet, target: Alphabet, window_radius: int, table):
        table = np.asarray(table, dtype=np.int64).reshape(-1)
        self.ctx = ctx
        self.source = source
        self.target = target
        self.window_radius = int(window_radius)
        self.neighbourhood = ctx.ball_offsets(self.window_radius)
        expected = source.size ** self.neighbourhood.shape[0]
        if table.shape[0] != expected:
            raise PatternError(f"rule table has {table.shape[0]} entries, expected {expected}")
        if table.size and (table.min() < 0 or table.max() >= target.size):
            raise PatternError("rule table refers to unknown target symbols")
        table.setflags(write=False)
        self.table = table

    @classmethod
    def from_function(cls, ctx: GroupContext, source: Alphabet, target: Alphabet, window_radius: int,
                      fn: Callable[[tuple], int]) -> "BlockCode":
        """Tabulate ``fn(source symbol indices on B_w) -> target index``."""
        w = ctx.ball_offsets(int(window_radius)).shape[0]
        table = [fn(t) for t in itertools.product(range(source.size), repeat=w)]
        return cls(ctx, source, target, window_radius, table)

    def rule(self, p: Pattern) -> int:
        return int(self.table[self._code(p.values.reshape(1, -1))[0]])

    def _code(self, vals: np.ndarray) -> np.ndarray:
        k = self.source.size
        code = np.zeros(vals.shape[0], dtype=np.int64)
        for j in range(vals.shape[1]):
            code = code * k + vals[:, j]
        return code

    def apply_rows(self, support: FiniteRegion, rows: np.ndarray, F: FiniteRegion) -> np.ndarray:
        """Apply the code cellwise on F to patterns on ``support`` (which must contain F.B_w)."""
        nb = (F.points[:, None, :] + self.neighbourhood[None, :, :]).reshape(-1, F.dimension)
        idx = support.indices_of(nb)
        if np.any(idx < 0):
            raise PatternError("support does not contain the dilated window")
        idx = idx.reshape(len(F), -1)
        out = np.empty((rows.shape[0], len(F)), dtype=np.int8)
        for c in range(len(F)):
            out[:, c] = self.table[self._code(rows[:, idx[c]].astype(np.int64))]
        return out

    def to_json(self) -> dict:
        return {"radius": self.window_radius,
                "target_alphabet": [_jsonable(s) for s in self.target.symbols],
                "target_zero": _jsonable(self.target.zero),
                "table": [_jsonable(self.target.symbols[v]) for v in self.table.tolist()]}


# --------------------------------------------------------------------------
# shift specifications


@dataclass(frozen=True)
class SupportCap:
    """Local rule: at most ``cap`` non-zero symbols on every translate of ``support``."""

    support: FiniteRegion
    cap: int


class ShiftSpec:
    ctx: GroupContext
    alphabet: Alphabet

    @property
    def dimension(self) -> int:
        return self.ctx.dimension

    @property
    def window_radius(self) -> int:
        raise NotImplementedError

    def default_margin(self) -> int:
        return 2 * self.window_radius

    @property
    def is_sft(self) -> bool:
        return False


@dataclass(frozen=True, eq=False)
class FullShift(ShiftSpec):
    ctx: GroupContext
    alphabet: Alphabet

    @property
    def window_radius(self) -> int:
        return 0

    @property
    def is_sft(self) -> bool:
        return True

    def rules(self) -> tuple[tuple, tuple]:
        return (), ()


@dataclass(frozen=True, eq=False)
class SFT(ShiftSpec):
    ctx: GroupContext
    alphabet: Alphabet
    forbidden: tuple = ()
    caps: tuple = ()
    name: str = field(default="", compare=False)

    def __post_init__(self):
        forb = tuple(self.forbidden)
        for p in forb:
            if not isinstance(p, Pattern):
                raise PatternError("forbidden entries must be Patterns")
            if p.support.dimension != self.ctx.dimension:
                raise PatternError("forbidden pattern has the wrong dimension")
            if len(p) == 0:
                raise PatternError("empty forbidden pattern forbids everything")
            if p.values.size and p.values.max() >= self.alphabet.size:
                raise PatternError("forbidden pattern uses an unknown symbol")
        for c in self.caps:
            if not isinstance(c, SupportCap):
                raise PatternError("caps must be SupportCap instances")
        object.__setattr__(self, "forbidden", forb)
        object.__setattr__(self, "caps", tuple(self.caps))

    @property
    def is_sft(self) -> bool:
        return True

    @property
    def window_radius(self) -> int:
        pts = [p.support.points for p in self.forbidden] + [c.support.points for c in self.caps]
        if not pts:
            return 0
        return radius_of(self.ctx, np.vstack(pts))

    def rules(self):
        return self.forbidden, self.caps

    def explicit_forbidden(self) -> tuple[Pattern, ...]:
        """Forbidden patterns with every support cap expanded into explicit patterns."""
        out = list(self.forbidden)
        k, z = self.alphabet.size, self.alphabet.zero_index
        for c in self.caps:
            n = len(c.support)
            if c.cap >= n:
                continue
            for vals in itertools.product(range(k), repeat=n):
                if sum(v != z for v in vals) > c.cap:
                    out.append(Pattern(c.support, vals))
        return tuple(out)


@dataclass(frozen=True, eq=False)
class Product(ShiftSpec):
    left: ShiftSpec
    right: ShiftSpec

    def __post_init__(self):
        if self.left.ctx != self.right.ctx:
            raise PatternError("product factors live on different groups")
        if self.left.alphabet.size * self.right.alphabet.size > MAX_SYMBOLS:
            raise PatternError("product alphabet too large")

    @property
    def ctx(self) -> GroupContext:
        return self.left.ctx

    @cached_property
    def alphabet(self) -> Alphabet:
        la, ra = self.left.alphabet, self.right.alphabet
        syms = tuple((a, b) for a in la.symbols for b in ra.symbols)
        return Alphabet(syms, (la.zero, ra.zero))

    @property
    def window_radius(self) -> int:
        return max(self.left.window_radius, self.right.window_radius)


@dataclass(frozen=True, eq=False)
class Factor(ShiftSpec):
    source: ShiftSpec
    code: BlockCode

    def __post_init__(self):
        if self.code.source.size != self.source.alphabet.size:
            raise PatternError("code source alphabet does not match the shift")

    @property
    def ctx(self) -> GroupContext:
        return self.source.ctx

    @property
    def alphabet(self) -> Alphabet:
        return self.code.target

    @property
    def window_radius(self) -> int:
        return self.source.window_radius + self.code.window_radius


def full_shift(alphabet: Alphabet | int, dimension: int = 1) -> FullShift:
    if isinstance(alphabet, int):
        alphabet = Alphabet.of_size(alphabet)
    return FullShift(GroupContext(dimension), alphabet)


def golden_mean() -> SFT:
    """Binary sequences on Z with no two adjacent 1s."""
    return SFT(GroupContext(1), Alphabet.binary(), (Pattern.word([1, 1]),), name="golden mean")


def two_constant() -> SFT:
    """Binary sequences on Z forbidding 01 and 10: only the two constant configurations."""
    return SFT(GroupContext(1), Alphabet.binary(), (Pattern.word([0, 1]), Pattern.word([1, 0])), name="two constants")


def singleton(alphabet: Alphabet | int = 2, dimension: int = 1) -> SFT:
    """Every non-zero symbol forbidden: only the all-zero configuration."""
    if isinstance(alphabet, int):
        alphabet = Alphabet.of_size(alphabet)
    ctx = GroupContext(dimension)
    origin = FiniteRegion([[0] * dimension], dimension)
    forb = tuple(Pattern(origin, [s]) for s in range(alphabet.size) if s != alphabet.zero_index)
    return SFT(ctx, alphabet, forb, name="singleton")


def forbid_run(length: int, symbol: int = 1) -> SFT:
    """Binary SFT on Z forbidding ``length`` consecutive copies of ``symbol``."""
    return SFT(GroupContext(1), Alphabet.binary(), (Pattern.word([symbol] * length),), name=f"no {symbol}^{length}")


# --------------------------------------------------------------------------
# enumeration engine


def _instances(D: FiniteRegion, offsets: np.ndarray) -> np.ndarray:
    """Index rows (into D) of every translate of ``offsets`` lying inside D."""
    w = offsets.shape[0]
    if len(D) == 0:
        return np.zeros((0, w), dtype=np.int64)
    corners = D.points - offsets[0]
    cells = (corners[:, None, :] + offsets[None, :, :]).reshape(-1, D.dimension)
    idx = D.indices_of(cells).reshape(len(D), w)
    return idx[np.all(idx >= 0, axis=1)]


@dataclass
class _Rules:
    fp_cells: np.ndarray  # (C, w) indices into D, padded with 0
    fp_vals: np.ndarray
    fp_len: np.ndarray
    cap_cells: np.ndarray
    cap_len: np.ndarray
    cap_max: np.ndarray


def _compile_rules(spec: ShiftSpec, D: FiniteRegion) -> _Rules:
    forbidden, caps = spec.rules()
    groups: dict[bytes, tuple[np.ndarray, list]] = {}
    for p in forbidden:
        key = p.support.points.tobytes()
        groups.setdefault(key, (p.support.points, []))[1].append(p.values)
    cells_l, vals_l = [], []
    for offs, vals in groups.values():
        inst = _instances(D, offs)
        if inst.shape[0] == 0:
            continue
        V = np.array(vals, dtype=np.int64)
        cells_l.append(np.repeat(inst, V.shape[0], axis=0))
        vals_l.append(np.tile(V, (inst.shape[0], 1)))
    fp_cells, fp_vals, fp_len = _pad(cells_l, vals_l)
    ccells_l, cmax_l = [], []
    for c in caps:
        if c.cap >= len(c.support):
            continue
        inst = _instances(D, c.support.points)
        if inst.shape[0] == 0:
            continue
        ccells_l.append(inst)
        cmax_l.append(np.full(inst.shape[0], c.cap, dtype=np.int64))
    cap_cells, _, cap_len = _pad(ccells_l, [np.zeros_like(a) for a in ccells_l])
    cap_max = np.concatenate(cmax_l) if cmax_l else np.zeros(0, dtype=np.int64)
    return _Rules(fp_cells, fp_vals, fp_len, cap_cells, cap_len, cap_max)


def _pad(cells_l, vals_l):
    if not cells_l:
        return np.zeros((0, 1), np.int64), np.zeros((0, 1), np.int64), np.zeros(0, np.int64)
    width = max(a.shape[1] for a in cells_l)
    n = sum(a.shape[0] for a in cells_l)
    cells = np.zeros((n, width), dtype=np.int64)
    vals = np.zeros((n, width), dtype=np.int64)
    lens = np.zeros(n, dtype=np.int64)
    at = 0
    for c, v in zip(cells_l, vals_l):
        m, w = c.shape
        cells[at:at + m, :w] = c
        vals[at:at + m, :w] = v
        lens[at:at + m] = w
        at += m
    return cells, vals, lens


def _components(n: int, rules: _Rules) -> np.ndarray:
    rows, cols = [], []
    for cells, lens in ((rules.fp_cells, rules.fp_len), (rules.cap_cells, rules.cap_len)):
        for w in np.unique(lens):
            sel = cells[lens == w, :w]
            if w > 1:
                rows.append(sel[:, :-1].ravel())
                cols.append(sel[:, 1:].ravel())
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        g = coo_matrix((np.ones(r.shape[0], dtype=np.int8), (r, c)), shape=(n, n))
        _, labels = connected_components(g, directed=False)
        return labels
    return np.arange(n)


@dataclass
class _CompResult:
    rows: np.ndarray  # projections onto the component's F cells
    witnesses: np.ndarray | None
    count: int


class _Engine:
    """Enumerates X_F (or its witnesses) for an SFT-like spec via per-component search."""

    def __init__(self, spec: ShiftSpec, D: FiniteRegion):
        self.spec = spec
        self.D = D
        self.k = spec.alphabet.size
        self.zero = spec.alphabet.zero_index
        self.rules = _compile_rules(spec, D)
        self.labels = _components(len(D), self.rules)
        fp_owner = self.labels[self.rules.fp_cells[:, 0]] if len(self.rules.fp_len) else np.zeros(0, np.int64)
        cap_owner = self.labels[self.rules.cap_cells[:, 0]] if len(self.rules.cap_len) else np.zeros(0, np.int64)
        self._fp_by = _group_rows(fp_owner)
        self._cap_by = _group_rows(cap_owner)
        self._cache: dict = {}

    def comp_cells(self):
        order = np.argsort(self.labels, kind="stable")
        lab = self.labels[order]
        cuts = np.flatnonzero(np.diff(lab)) + 1
        return np.split(order, cuts)

    def solve_component(self, cells: np.ndarray, proj_mask: np.ndarray, *, count_only: bool,
                        want_witness: bool, limit: int, count_fallback: bool = False) -> _CompResult:
        """Projection of one component.  With ``count_fallback`` an oversized projection
        comes back with ``rows=None`` and only its count."""
        label = int(self.labels[cells[0]])
        fp_rows = self._fp_by.get(label, np.zeros(0, np.int64))
        cap_rows = self._cap_by.get(label, np.zeros(0, np.int64))
        n = cells.shape[0]
        n_proj = int(proj_mask.sum())
        if fp_rows.size == 0 and cap_rows.size == 0:
            # unconstrained cells
            if count_only:
                return _CompResult(np.zeros((0, n_proj), np.int8), None, self.k ** n_proj)
            rows = _all_words(self.k, n_proj)
            wit = None
            if want_witness:
                wit = np.zeros((rows.shape[0], n), dtype=np.int8)
                wit[:, proj_mask] = rows
            return _CompResult(rows, wit, rows.shape[0])
        key = None
        if not want_witness:
            rel = self.D.points[cells] - self.D.points[cells[0]]
            key = (rel.tobytes(), proj_mask.tobytes(), count_only, limit)
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        # local order: projected cells first (lexicographic), then the rest
        local_order = np.concatenate([cells[proj_mask], cells[~proj_mask]])
        lut = np.full(len(self.D), -1, dtype=np.int64)
        lut[local_order] = np.arange(n)
        r = self.rules
        fpc = lut[r.fp_cells[fp_rows]] if fp_rows.size else np.zeros((0, 1), np.int64)
        fpl = r.fp_len[fp_rows]
        fpv = r.fp_vals[fp_rows]
        if fp_rows.size:
            width = fpc.shape[1]
            valid = np.arange(width)[None, :] < fpl[:, None]
            fpc = np.where(valid, fpc, 0)
            trig = np.where(valid, fpc, -1).max(axis=1)
        else:
            trig = np.zeros(0, np.int64)
        fp_ptr, fp_idx = _csr(trig, n)
        cc = lut[r.cap_cells[cap_rows]] if cap_rows.size else np.zeros((0, 1), np.int64)
        cl = r.cap_len[cap_rows]
        cm = r.cap_max[cap_rows]
        if cap_rows.size:
            width = cc.shape[1]
            valid = np.arange(width)[None, :] < cl[:, None]
            cc = np.where(valid, cc, 0)
            owners = np.repeat(np.arange(cc.shape[0]), cl)
            members = cc[valid]
        else:
            owners = members = np.zeros(0, np.int64)
        cap_ptr, cap_idx = _csr_pairs(members, owners, n)
        fixed = np.full(n, -1, dtype=np.int64)
        args = (n, n_proj, self.k, self.zero, fixed, fp_ptr, fp_idx, fpc, fpv, fpl, cap_ptr, cap_idx, cc, cl, cm)
        probe = 0 if count_only else limit + 1
        _, _, count, over = kernels.dfs_project(*args, probe, False, True)
        if not count_only and count > 0:
            if over:
                if count_fallback:
                    res = _CompResult(None, None, -1)
                    if key is not None:
                        self._cache[key] = res
                    return res
                raise PatternLimitError(f"more than {limit} patterns on a component of {n} cells")
            out, wit, count, _ = kernels.dfs_project(*args, count, want_witness, False)
        if count_only or count == 0:
            res = _CompResult(np.zeros((0, n_proj), np.int8), np.zeros((0, n), np.int8), int(count))
        else:
            w = None
            if want_witness:
                # reorder witness columns back to the component's cell order
                w = np.empty((count, n), dtype=np.int8)
                pos = np.concatenate([np.flatnonzero(proj_mask), np.flatnonzero(~proj_mask)])
                w[:, pos] = wit[:count]
            res = _CompResult(out[:count].copy(), w, int(count))
        if key is not None:
            self._cache[key] = res
        return res


def _group_rows(owner: np.ndarray) -> dict[int, np.ndarray]:
    if owner.size == 0:
        return {}
    order = np.argsort(owner, kind="stable")
    lab = owner[order]
    cuts = np.flatnonzero(np.diff(lab)) + 1
    return {int(lab[s[0]]): order[s] for s in np.split(np.arange(order.size), cuts)}


def _csr(trigger: np.ndarray, n: int):
    order = np.argsort(trigger, kind="stable")
    counts = np.bincount(trigger, minlength=n) if trigger.size else np.zeros(n, np.int64)
    ptr = np.zeros(n + 1, dtype=np.int64)
    ptr[1:] = np.cumsum(counts)
    return ptr, order.astype(np.int64)


def _csr_pairs(member: np.ndarray, owner: np.ndarray, n: int):
    order = np.argsort(member, kind="stable")
    counts = np.bincount(member, minlength=n) if member.size else np.zeros(n, np.int64)
    ptr = np.zeros(n + 1, dtype=np.int64)
    ptr[1:] = np.cumsum(counts)
    return ptr, owner[order].astype(np.int64)


def _all_words(k: int, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros((1, 0), dtype=np.int8)
    total = k ** n
    codes = np.arange(total, dtype=np.int64)
    out = np.empty((total, n), dtype=np.int8)
    for j in range(n - 1, -1, -1):
        out[:, j] = codes % k
        codes //= k
    return out


def _cartesian(parts: list[np.ndarray]) -> np.ndarray:
    """Row-wise cartesian product; first part varies slowest."""
    total = 1
    for p in parts:
        total *= p.shape[0]
    width = sum(p.shape[1] for p in parts)
    out = np.empty((total, width), dtype=np.int8)
    col, rep = 0, total
    for p in parts:
        m = p.shape[0]
        rep //= max(m, 1)
        block = np.repeat(p, rep, axis=0)
        out[:, col:col + p.shape[1]] = np.tile(block, (total // max(block.shape[0], 1), 1)) if m else block
        col += p.shape[1]
    return out


def _check_margin(spec: ShiftSpec, margin: int | None) -> int:
    m = spec.default_margin() if margin is None else int(margin)
    if m < 0:
        raise PatternError("margin must be non-negative")
    return m


def _sft_project(spec: ShiftSpec, F: FiniteRegion, D: FiniteRegion, *, count_only=False,
                 want_witness=False, limit=DEFAULT_PATTERN_LIMIT):
    """Projection onto F of locally admissible patterns on D (F subset of D)."""
    eng = _Engine(spec, D)
    f_idx = D.indices_of(F.points)
    if np.any(f_idx < 0):
        raise PatternError("window not contained in the search region")
    in_F = np.zeros(len(D), dtype=bool)
    in_F[f_idx] = True
    col_of = np.full(len(D), -1, dtype=np.int64)
    col_of[f_idx] = np.arange(len(F))
    parts, cols, wcells = [], [], []
    total = 1
    for cells in eng.comp_cells():
        mask = in_F[cells]
        res = eng.solve_component(cells, mask, count_only=count_only,
                                  want_witness=want_witness, limit=limit)
        if res.count == 0:
            total = 0
            if count_only:
                return 0
            break
        total *= res.count
        if not count_only and total > limit:
            raise PatternLimitError(f"window projection exceeds {limit} patterns")
        if mask.any() or want_witness:
            parts.append(res)
            cols.append(col_of[cells[mask]])
            wcells.append(cells)
    if count_only:
        return total
    if total == 0:
        rows = np.zeros((0, len(F)), dtype=np.int8)
        return (rows, np.zeros((0, len(D)), np.int8)) if want_witness else rows
    proj_parts = [p.rows for p in parts]
    combo = _cartesian(proj_parts) if proj_parts else np.zeros((1, 0), np.int8)
    rows = np.empty((combo.shape[0], len(F)), dtype=np.int8)
    rows[:, np.concatenate(cols) if cols else np.zeros(0, np.int64)] = combo
    order = np.lexsort(rows.T[::-1]) if rows.shape[1] else np.arange(rows.shape[0])
    rows = rows[order]
    if not want_witness:
        return rows
    idx_parts = [np.arange(p.rows.shape[0]).reshape(-1, 1) for p in parts]
    choice = _cartesian([i.astype(np.int8) if i.shape[0] < 127 else i for i in idx_parts]) if parts else None
    if parts and any(p.rows.shape[0] >= 127 for p in parts):
        choice = _cartesian_index([p.rows.shape[0] for p in parts])
    wit = np.zeros((rows.shape[0], len(D)), dtype=np.int8)
    if parts:
        choice = np.asarray(choice, dtype=np.int64)[order]
        for j, (p, cells) in enumerate(zip(parts, wcells)):
            wit[:, cells] = p.witnesses[choice[:, j]]
    return rows, wit


def _cartesian_index(sizes: list[int]) -> np.ndarray:
    grids = np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


# --------------------------------------------------------------------------
# transfer matrix for Z^1


class _TransferMatrix:
    """De Bruijn-style presentation of a one-dimensional SFT-like spec."""

    def __init__(self, spec: ShiftSpec):
        from .geometry import interval

        forbidden, caps = spec.rules()
        spans = [int(p.support.points.max() - p.support.points.min()) for p in forbidden]
        spans += [int(c.support.points.max() - c.support.points.min()) for c in caps]
        self.k_mem = max([1] + spans)
        self.spec = spec
        words = _sft_project(spec, interval(0, self.k_mem + 1), interval(0, self.k_mem + 1))
        kk = spec.alphabet.size
        base = kk ** np.arange(self.k_mem - 1, -1, -1, dtype=np.int64)
        pre = words[:, :-1].astype(np.int64) @ base
        suf = words[:, 1:].astype(np.int64) @ base
        nodes, inv = np.unique(np.concatenate([pre, suf]), return_inverse=True)
        self.n_nodes = nodes.shape[0]
        self.src = inv[: pre.shape[0]]
        self.dst = inv[pre.shape[0]:]

    def _step_exists(self, active: np.ndarray, forward: bool) -> np.ndarray:
        out = np.zeros(self.n_nodes, dtype=bool)
        if forward:
            out[self.dst[active[self.src]]] = True
        else:
            out[self.src[active[self.dst]]] = True
        return out

    def count(self, n: int, margin: int) -> int:
        if n < self.k_mem:
            raise PatternError("window shorter than the memory")
        left = np.ones(self.n_nodes, dtype=bool)
        right = np.ones(self.n_nodes, dtype=bool)
        for _ in range(margin):
            left = self._step_exists(left, True)
            right = self._step_exists(right, False)
        vec = [1 if b else 0 for b in left.tolist()]
        src = self.src.tolist()
        dst = self.dst.tolist()
        for _ in range(n - self.k_mem):
            new = [0] * self.n_nodes
            for s, t in zip(src, dst):
                v = vec[s]
                if v:
                    new[t] += v
            vec = new
        return sum(v for v, ok in zip(vec, right.tolist()) if ok)


_TM_CACHE: dict[int, _TransferMatrix] = {}


def _transfer_matrix(spec: ShiftSpec) -> _TransferMatrix:
    tm = _TM_CACHE.get(id(spec))
    if tm is None or tm.spec is not spec:
        tm = _TransferMatrix(spec)
        _TM_CACHE[id(spec)] = tm
    return tm


def _is_interval(F: FiniteRegion) -> bool:
    if F.dimension != 1 or len(F) == 0:
        return False
    p = F.points[:, 0]
    return int(p[-1] - p[0]) + 1 == len(F)


def transfer_matrix_count(spec: ShiftSpec, F: FiniteRegion, margin: int | None = None) -> int:
    """Count X_F for a one-dimensional SFT-like spec and an interval F by transfer matrix."""
    if not spec.is_sft or spec.dimension != 1:
        raise PatternError("transfer-matrix counting needs a one-dimensional SFT")
    if not _is_interval(F):
        raise PatternError("transfer-matrix counting needs an interval window")
    m = _check_margin(spec, margin)
    if isinstance(spec, FullShift) or (not spec.rules()[0] and not spec.rules()[1]):
        return spec.alphabet.size ** len(F)
    tm = _transfer_matrix(spec)
    if len(F) < tm.k_mem:
        return count_patterns(spec, F, m, method="enumerate")
    return tm.count(len(F), m)


# --------------------------------------------------------------------------
# public operations


def enumerate_patterns(spec: ShiftSpec, F: FiniteRegion, margin: int | None = None,
                       limit: int = DEFAULT_PATTERN_LIMIT) -> PatternSet:
    """X_F in canonical (lexicographic) order."""
    rows = _enumerate_rows(spec, F, margin, limit)
    return PatternSet(F, rows, spec.alphabet, _sorted=True)


def _enumerate_rows(spec: ShiftSpec, F: FiniteRegion, margin: int | None, limit: int) -> np.ndarray:
    m = _check_margin(spec, margin)
    if F.dimension != spec.dimension:
        raise GeometryError("window dimension does not match the shift")
    if spec.is_sft:
        D = dilate(spec.ctx, F, m)
        return _sft_project(spec, F, D, limit=limit)
    if isinstance(spec, Product):
        left = _enumerate_rows(spec.left, F, margin, limit)
        right = _enumerate_rows(spec.right, F, margin, limit)
        if left.shape[0] * right.shape[0] > limit:
            raise PatternLimitError(f"window projection exceeds {limit} patterns")
        kr = spec.right.alphabet.size
        li = np.repeat(np.arange(left.shape[0]), right.shape[0])
        ri = np.tile(np.arange(right.shape[0]), left.shape[0])
        rows = (left[li].astype(np.int16) * kr + right[ri]).astype(np.int8)
        return PatternSet(F, rows, spec.alphabet).rows
    if isinstance(spec, Factor):
        code = spec.code
        G = dilate(spec.ctx, F, code.window_radius)
        src = _enumerate_rows(spec.source, G, margin, limit)
        img = code.apply_rows(G, src, F)
        return PatternSet(F, img, spec.alphabet).rows
    raise PatternError(f"unsupported shift kind {type(spec).__name__}")


def enumerate_witnesses(spec: ShiftSpec, F: FiniteRegion, margin: int | None = None,
                        limit: int = DEFAULT_PATTERN_LIMIT) -> tuple[PatternSet, FiniteRegion, np.ndarray]:
    """X_F together with one locally admissible extension to F.B_margin per pattern."""
    if not spec.is_sft:
        raise PatternError("witnesses are only available for SFT-like specs")
    m = _check_margin(spec, margin)
    D = dilate(spec.ctx, F, m)
    rows, wit = _sft_project(spec, F, D, want_witness=True, limit=limit)
    return PatternSet(F, rows, spec.alphabet, _sorted=True), D, wit


def project_patterns(spec: ShiftSpec, F: FiniteRegion, search: FiniteRegion,
                     limit: int = DEFAULT_PATTERN_LIMIT) -> PatternSet:
    """Restrictions to F of locally admissible patterns on ``search`` (F must lie inside it)."""
    if not spec.is_sft:
        raise PatternError("explicit search regions are only available for SFT-like specs")
    rows = _sft_project(spec, F, search, limit=limit)
    return PatternSet(F, rows, spec.alphabet, _sorted=True)


def projection_factors(spec: ShiftSpec, F: FiniteRegion, search: FiniteRegion,
                       limit: int = DEFAULT_PATTERN_LIMIT) -> list[tuple[np.ndarray, np.ndarray | None, int]] | None:
    """Independent factors of the projection onto F of locally admissible patterns on ``search``.

    Returns a list of (F column indices, rows, count) triples whose cartesian
    product is the projection, or None when it is empty.  Cells of F that no
    constraint touches come back as single-column factors.  A factor with more
    than ``limit`` rows is returned with ``rows=None`` and, in place of its
    exact count, the product of counts over smaller chunks (an upper bound).
    """
    if not spec.is_sft:
        raise PatternError("factorised projections are only available for SFT-like specs")
    eng = _Engine(spec, search)
    f_idx = search.indices_of(F.points)
    if np.any(f_idx < 0):
        raise PatternError("window not contained in the search region")
    in_F = np.zeros(len(search), dtype=bool)
    in_F[f_idx] = True
    col_of = np.full(len(search), -1, dtype=np.int64)
    col_of[f_idx] = np.arange(len(F))
    out = []
    for cells in eng.comp_cells():
        mask = in_F[cells]
        res = eng.solve_component(cells, mask, count_only=not mask.any(), want_witness=False, limit=limit,
                                  count_fallback=True)
        if res.count == 0:
            return None
        if not mask.any():
            continue
        count = res.count if res.count > 0 else _chunked_count(eng, cells, mask, limit)
        if count == 0:
            return None
        out.append((col_of[cells[mask]], res.rows, count))
    return out


def _chunked_count(eng: _Engine, cells: np.ndarray, mask: np.ndarray, limit: int) -> int:
    # projection onto a union embeds in the product of projections onto the parts
    where = np.flatnonzero(mask)
    total = 1
    for part in np.array_split(where, 2):
        sub = np.zeros_like(mask)
        sub[part] = True
        res = eng.solve_component(cells, sub, count_only=False, want_witness=False, limit=limit,
                                  count_fallback=True)
        c = res.count if res.count >= 0 else _chunked_count(eng, cells, sub, limit)
        if c == 0:
            return 0
        total *= c
    return total


def count_patterns(spec: ShiftSpec, F: FiniteRegion, margin: int | None = None, method: str = "auto") -> int:
    """|X_F|.  ``method``: 'auto', 'enumerate' or 'transfer'."""
    m = _check_margin(spec, margin)
    if method not in ("auto", "enumerate", "transfer"):
        raise PatternError(f"unknown counting method {method!r}")
    if method == "transfer" or (method == "auto" and spec.is_sft and spec.dimension == 1
                                and _is_interval(F) and len(F) > 12):
        return transfer_matrix_count(spec, F, m)
    if spec.is_sft:
        D = dilate(spec.ctx, F, m)
        return int(_sft_project(spec, F, D, count_only=True))
    if isinstance(spec, Product):
        return count_patterns(spec.left, F, margin, method) * count_patterns(spec.right, F, margin, method)
    return len(enumerate_patterns(spec, F, margin))


# --------------------------------------------------------------------------
# gluing


@dataclass(frozen=True)
class GluingVerdict:
    passed: bool
    count_K: int
    count_H: int
    count_joint: int
    counterexample: tuple[Pattern, Pattern] | None = None

    def to_json(self, alphabet: Alphabet | None = None) -> dict:
        out = {"passed": self.passed, "count_K": self.count_K, "count_H": self.count_H,
               "count_joint": self.count_joint}
        if self.counterexample is not None:
            out["counterexample"] = [p.to_json(alphabet) for p in self.counterexample]
        return out


def check_gluing(spec: ShiftSpec, r: int, K: FiniteRegion, H: FiniteRegion, margin: int) -> GluingVerdict:
    """Finite-window gluing test at separation radius ``r``.

    Passes iff every pair (x_K, y_H) in X_K x X_H occurs jointly in X_{K u H},
    all three computed with the same margin.
    """
    if r < 1 or margin < 1:
        raise PatternError("r and margin must be positive")
    if len(K) == 0 or len(H) == 0:
        raise PatternError("empty region")
    ctx = spec.ctx
    if ctx.is_standard:
        diff = K.points[:, None, :] - H.points[None, :, :]
        gap = int(np.abs(diff).sum(axis=2).min())
    else:
        gap = min(ctx.distance(k, h) for k in K for h in H)
    if gap <= r:
        raise PatternError("gap ≤ r")
    XK = enumerate_patterns(spec, K, margin)
    XH = enumerate_patterns(spec, H, margin)
    KH = K.union(H)
    XKH = enumerate_patterns(spec, KH, margin)
    kcols = KH.indices_of(K.points)
    hcols = KH.indices_of(H.points)
    joint = len(XKH)
    if joint == len(XK) * len(XH):
        return GluingVerdict(True, len(XK), len(XH), joint)
    seen = {(row[kcols].tobytes(), row[hcols].tobytes()) for row in XKH.rows}
    for xk in XK.rows:
        for yh in XH.rows:
            if (xk.tobytes(), yh.tobytes()) not in seen:
                return GluingVerdict(False, len(XK), len(XH), joint, (Pattern(K, xk), Pattern(H, yh)))
    raise AssertionError("joint projection larger than the product")  # pragma: no cover


# --------------------------------------------------------------------------
# JSON


def spec_to_json(spec: ShiftSpec) -> dict:
    def alpha(a: Alphabet) -> dict:
        return {"alphabet": [_jsonable(s) for s in a.symbols], "zero": _jsonable(a.zero)}

    base = {"dimension": spec.dimension}
    if not spec.ctx.is_standard:
        base["generators"] = [list(g) for g in spec.ctx.generators]
    if isinstance(spec, FullShift):
        return {"kind": "full", **alpha(spec.alphabet), **base, "forbidden": []}
    if isinstance(spec, SFT):
        out = {"kind": "sft", **alpha(spec.alphabet), **base,
               "forbidden": [p.to_json(spec.alphabet) for p in spec.forbidden]}
        if spec.caps:
            out["caps"] = [{"support": c.support.to_json(), "cap": c.cap} for c in spec.caps]
        if spec.name:
            out["name"] = spec.name
        return out
    if isinstance(spec, Product):
        return {"kind": "product", "left": spec_to_json(spec.left), "right": spec_to_json(spec.right)}
    if isinstance(spec, Factor):
        return {"kind": "factor", "source": spec_to_json(spec.source), "code": spec.code.to_json()}
    raise PatternError(f"cannot serialise {type(spec).__name__}")


def spec_from_json(obj: dict) -> ShiftSpec:
    kind = obj.get("kind")
    if kind == "product":
        return Product(spec_from_json(obj["left"]), spec_from_json(obj["right"]))
    if kind == "factor":
        src = spec_from_json(obj["source"])
        c = obj["code"]
        target = Alphabet(tuple(_symbol_key(s) for s in c["target_alphabet"]),
                          _symbol_key(c.get("target_zero", c["target_alphabet"][0])))
        table = [target.index(_symbol_key(s)) for s in c["table"]]
        return Factor(src, BlockCode(src.ctx, src.alphabet, target, int(c["radius"]), table))
    for key in ("alphabet", "dimension"):
        if key not in obj:
            raise PatternError(f"missing field {key!r}")
    ctx = GroupContext.from_json(obj)
    syms = tuple(_symbol_key(s) for s in obj["alphabet"])
    alphabet = Alphabet(syms, _symbol_key(obj["zero"]) if "zero" in obj else None)
    if kind == "density":
        from .spectrum import density_sft

        from .tiling import TileSet
        tiles = TileSet.from_json(obj["tiles"], ctx)
        return density_sft(alphabet, tiles, int(obj["level"])).spec
    forbidden = tuple(Pattern.from_json(p, alphabet, ctx.dimension) for p in obj.get("forbidden", []))
    caps = tuple(SupportCap(FiniteRegion.from_json(c["support"], ctx.dimension), int(c["cap"]))
                 for c in obj.get("caps", []))
    if kind == "full" or (kind is None and not forbidden and not caps):
        return FullShift(ctx, alphabet)
    if kind not in (None, "sft", "full"):
        raise PatternError(f"unknown shift kind {kind!r}")
    return SFT(ctx, alphabet, forbidden, caps, name=str(obj.get("name", "")))
