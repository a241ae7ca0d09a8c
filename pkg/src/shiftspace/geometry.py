"""Word-metric geometry on Z^d: balls, boundaries, boundary ratios, boxes."""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import kernels


class GeometryError(ValueError):
    pass


def _standard_generators(d: int) -> tuple[tuple[int, ...], ...]:
    gens = []
    for i in range(d):
        for s in (1, -1):
            v = [0] * d
            v[i] = s
            gens.append(tuple(v))
    return tuple(sorted(gens))


def _bareiss_det(rows: list[list[int]]) -> int:
    m = [list(r) for r in rows]
    n = len(m)
    sign, prev = 1, 1
    for i in range(n - 1):
        if m[i][i] == 0:
            for j in range(i + 1, n):
                if m[j][i] != 0:
                    m[i], m[j] = m[j], m[i]
                    sign = -sign
                    break
            else:
                return 0
        for j in range(i + 1, n):
            for c in range(i + 1, n):
                m[j][c] = (m[j][c] * m[i][i] - m[j][i] * m[i][c]) // prev
        prev = m[i][i]
    return sign * m[n - 1][n - 1]


def _generates_lattice(gens: Sequence[Sequence[int]], d: int) -> bool:
    g = 0
    for rows in itertools.combinations(gens, d):
        g = np.gcd(g, abs(_bareiss_det([list(r) for r in rows])))
        if g == 1:
            return True
    return False


@dataclass(frozen=True)
class GroupContext:
    """Z^d with a finite symmetric generating set; the word metric comes from it."""

    dimension: int
    generators: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        d = self.dimension
        if not isinstance(d, (int, np.integer)) or d < 1:
            raise GeometryError(f"dimension must be a positive integer, got {d!r}")
        gens = self.generators or _standard_generators(d)
        gens = tuple(sorted({tuple(int(c) for c in g) for g in gens}))
        for g in gens:
            if len(g) != d:
                raise GeometryError(f"generator {g} has wrong dimension (expected {d})")
            if not any(g):
                raise GeometryError("the identity is not a generator")
        gset = set(gens)
        for g in gens:
            if tuple(-c for c in g) not in gset:
                raise GeometryError(f"generator set is not symmetric: missing inverse of {g}")
        if not _generates_lattice(gens, d):
            raise GeometryError("generators do not generate Z^d")
        object.__setattr__(self, "dimension", int(d))
        object.__setattr__(self, "generators", gens)

    @classmethod
    def standard(cls, d: int) -> "GroupContext":
        return cls(d)

    @property
    def is_standard(self) -> bool:
        return self.generators == _standard_generators(self.dimension)

    @property
    def identity(self) -> tuple[int, ...]:
        return (0,) * self.dimension

    def norm(self, g: Sequence[int]) -> int:
        """Word length of ``g``."""
        g = tuple(int(c) for c in g)
        if len(g) != self.dimension:
            raise GeometryError("dimension mismatch")
        if self.is_standard:
            return sum(abs(c) for c in g)
        r = 0
        while True:
            if g in self._ball_set(r):
                return r
            r += 1

    def distance(self, g: Sequence[int], h: Sequence[int]) -> int:
        return self.norm(np.asarray(h, dtype=np.int64) - np.asarray(g, dtype=np.int64))

    @lru_cache(maxsize=64)
    def _ball_set(self, r: int) -> frozenset:
        return frozenset(map(tuple, self.ball_offsets(r).tolist()))

    @lru_cache(maxsize=64)
    def ball_offsets(self, r: int) -> np.ndarray:
        """Points of B_r as an (n, d) array in lexicographic order."""
        if r < 0:
            raise GeometryError("radius must be non-negative")
        d = self.dimension
        if self.is_standard:
            rng = range(-r, r + 1)
            pts = [p for p in itertools.product(rng, repeat=d) if sum(map(abs, p)) <= r]
        else:
            seen = {self.identity: 0}
            frontier = deque([self.identity])
            while frontier:
                p = frontier.popleft()
                if seen[p] == r:
                    continue
                for g in self.generators:
                    q = tuple(a + b for a, b in zip(p, g))
                    if q not in seen:
                        seen[q] = seen[p] + 1
                        frontier.append(q)
            pts = list(seen)
        arr = np.array(sorted(pts), dtype=np.int64).reshape(-1, d)
        arr.setflags(write=False)
        return arr

    def to_json(self) -> dict:
        return {"dimension": self.dimension, "generators": [list(g) for g in self.generators]}

    @classmethod
    def from_json(cls, obj: dict) -> "GroupContext":
        gens = obj.get("generators") or ()
        return cls(int(obj["dimension"]), tuple(tuple(g) for g in gens))


def _lexsort_unique(points: np.ndarray) -> np.ndarray:
    if points.shape[0] == 0:
        return points
    return np.unique(points, axis=0)  # np.unique sorts rows lexicographically


class FiniteRegion:
    """Finite subset of Z^d, duplicate-free, iterated in lexicographic order."""

    __slots__ = ("_points", "_dimension", "__dict__")

    def __init__(self, points, dimension: int | None = None):
        arr = np.asarray(points, dtype=np.int64)
        if arr.ndim == 1:
            if dimension is None or dimension == 1:
                arr = arr.reshape(-1, 1)
            else:
                arr = arr.reshape(-1, dimension)
        if arr.ndim != 2:
            raise GeometryError("points must be a sequence of integer vectors")
        if arr.shape[0] == 0:
            if dimension is None and arr.shape[1] == 0:
                raise GeometryError("dimension needed for an empty region")
            d = dimension if dimension is not None else arr.shape[1]
            arr = np.zeros((0, d), dtype=np.int64)
        elif dimension is not None and arr.shape[1] != dimension:
            raise GeometryError(f"points have dimension {arr.shape[1]}, expected {dimension}")
        arr = _lexsort_unique(arr)
        arr.setflags(write=False)
        self._points = arr
        self._dimension = arr.shape[1]

    @classmethod
    def _from_sorted(cls, arr: np.ndarray) -> "FiniteRegion":
        obj = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.int64)
        arr.setflags(write=False)
        obj._points = arr
        obj._dimension = arr.shape[1]
        return obj

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dimension(self) -> int:
        return self._dimension

    def __len__(self) -> int:
        return self._points.shape[0]

    def __iter__(self):
        return iter(map(tuple, self._points.tolist()))

    def __bool__(self) -> bool:
        return len(self) > 0

    @cached_property
    def _key(self) -> bytes:
        return self._dimension.to_bytes(2, "little") + self._points.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteRegion):
            return NotImplemented
        return self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        if len(self) <= 8:
            return f"FiniteRegion({[list(p) for p in self]})"
        return f"FiniteRegion(<{len(self)} points in Z^{self.dimension}>)"

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        return {p: i for i, p in enumerate(self)}

    def __contains__(self, g) -> bool:
        return tuple(int(c) for c in g) in self.index

    def indices_of(self, points: np.ndarray) -> np.ndarray:
        """Index of each row of ``points`` in this region, or -1."""
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self._dimension)
        if len(self) == 0:
            return np.full(pts.shape[0], -1, dtype=np.int64)
        grid = Grid.around(self._points, 0)
        flat = grid.flat_or_minus(pts)
        lut = np.full(grid.size, -1, dtype=np.int64)
        lut[grid.flat(self._points)] = np.arange(len(self))
        out = np.full(pts.shape[0], -1, dtype=np.int64)
        ok = flat >= 0
        out[ok] = lut[flat[ok]]
        return out

    def translate(self, v: Sequence[int]) -> "FiniteRegion":
        v = np.asarray(v, dtype=np.int64).reshape(1, -1)
        if v.shape[1] != self._dimension:
            raise GeometryError("dimension mismatch")
        return FiniteRegion._from_sorted(self._points + v)

    def _check(self, other: "FiniteRegion"):
        if other.dimension != self.dimension:
            raise GeometryError("dimension mismatch")

    def union(self, other: "FiniteRegion") -> "FiniteRegion":
        self._check(other)
        return FiniteRegion(np.vstack([self._points, other._points]), self._dimension)

    def intersection(self, other: "FiniteRegion") -> "FiniteRegion":
        self._check(other)
        keep = other.indices_of(self._points) >= 0
        return FiniteRegion._from_sorted(self._points[keep])

    def difference(self, other: "FiniteRegion") -> "FiniteRegion":
        self._check(other)
        keep = other.indices_of(self._points) < 0
        return FiniteRegion._from_sorted(self._points[keep])

    def issubset(self, other: "FiniteRegion") -> bool:
        self._check(other)
        return bool(np.all(other.indices_of(self._points) >= 0))

    def isdisjoint(self, other: "FiniteRegion") -> bool:
        self._check(other)
        return not bool(np.any(other.indices_of(self._points) >= 0))

    def minkowski(self, offsets: np.ndarray) -> "FiniteRegion":
        """``{f + o : f in self, o in offsets}``."""
        offsets = np.asarray(offsets, dtype=np.int64).reshape(-1, self._dimension)
        if len(self) == 0 or offsets.shape[0] == 0:
            return FiniteRegion(np.zeros((0, self._dimension)), self._dimension)
        grid = Grid.around(self._points, _extent(offsets))
        mask = np.zeros(grid.size, dtype=np.uint8)
        mask[grid.flat(self._points)] = 1
        out = kernels.dilate_flat(mask, grid.deltas(offsets))
        return FiniteRegion._from_sorted(grid.unflat(np.flatnonzero(out)))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self._points.min(axis=0), self._points.max(axis=0)

    def to_json(self) -> list[list[int]]:
        return self._points.tolist()

    @classmethod
    def from_json(cls, obj, dimension: int | None = None) -> "FiniteRegion":
        pts = [[p] if isinstance(p, int) else list(p) for p in obj]
        if not pts:
            if dimension is None:
                raise GeometryError("dimension needed for an empty region")
            return cls(np.zeros((0, dimension)), dimension)
        return cls(pts, dimension)


def _extent(offsets: np.ndarray) -> int:
    return int(np.abs(offsets).max()) if offsets.size else 0


class Grid:
    """Padded bounding-box grid giving flat row-major indices (lexicographic order)."""

    def __init__(self, lo: np.ndarray, shape: np.ndarray):
        self.lo = np.asarray(lo, dtype=np.int64)
        self.shape = np.asarray(shape, dtype=np.int64)
        strides = np.ones(len(self.shape), dtype=np.int64)
        for i in range(len(self.shape) - 2, -1, -1):
            strides[i] = strides[i + 1] * self.shape[i + 1]
        self.strides = strides
        self.size = int(np.prod(self.shape))

    @classmethod
    def around(cls, points: np.ndarray, pad: int) -> "Grid":
        lo = points.min(axis=0) - pad
        hi = points.max(axis=0) + pad
        return cls(lo, hi - lo + 1)

    def flat(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.int64) - self.lo) @ self.strides

    def flat_or_minus(self, points: np.ndarray) -> np.ndarray:
        rel = np.asarray(points, dtype=np.int64) - self.lo
        ok = np.all((rel >= 0) & (rel < self.shape), axis=1)
        out = np.full(rel.shape[0], -1, dtype=np.int64)
        out[ok] = rel[ok] @ self.strides
        return out

    def unflat(self, flat: np.ndarray) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        out = np.empty((flat.shape[0], len(self.shape)), dtype=np.int64)
        rem = flat.copy()
        for i, s in enumerate(self.strides):
            out[:, i] = rem // s
            rem = rem % s
        return out + self.lo

    def deltas(self, offsets: np.ndarray) -> np.ndarray:
        return np.asarray(offsets, dtype=np.int64) @ self.strides


def as_region(obj, ctx: GroupContext | None = None) -> FiniteRegion:
    if isinstance(obj, FiniteRegion):
        return obj
    return FiniteRegion(obj, ctx.dimension if ctx else None)


def ball(ctx: GroupContext, r: int) -> FiniteRegion:
    """B_r = {g : d(e, g) <= r}."""
    return FiniteRegion._from_sorted(ctx.ball_offsets(int(r)))


def dilate(ctx: GroupContext, F: FiniteRegion, r: int) -> FiniteRegion:
    """F . B_r."""
    if r == 0:
        return F
    return F.minkowski(ctx.ball_offsets(int(r)))


def erode(ctx: GroupContext, F: FiniteRegion, r: int) -> FiniteRegion:
    """{g : g . B_r subset of F}."""
    if r == 0 or len(F) == 0:
        return F
    offs = ctx.ball_offsets(int(r))
    grid = Grid.around(F.points, _extent(offs))
    mask = np.zeros(grid.size, dtype=np.uint8)
    mask[grid.flat(F.points)] = 1
    out = kernels.erode_flat(mask, grid.deltas(offs))
    return FiniteRegion._from_sorted(grid.unflat(np.flatnonzero(out)))


def boundary(ctx: GroupContext, F: FiniteRegion, r: int) -> FiniteRegion:
    """r-boundary: points whose r-ball meets both F and its complement."""
    if len(F) == 0:
        raise GeometryError("empty region")
    if r < 1:
        raise GeometryError("boundary radius must be positive")
    offs = ctx.ball_offsets(int(r))
    grid = Grid.around(F.points, 2 * _extent(offs))
    mask = np.zeros(grid.size, dtype=np.uint8)
    mask[grid.flat(F.points)] = 1
    deltas = grid.deltas(offs)
    dil = kernels.dilate_flat(mask, deltas)
    ero = kernels.erode_flat(mask, deltas)
    return FiniteRegion._from_sorted(grid.unflat(np.flatnonzero(dil & (1 - ero))))


def boundary_ratio(ctx: GroupContext, F: FiniteRegion, r: int) -> Fraction:
    """|boundary_r(F)| / |F| as an exact fraction."""
    return Fraction(len(boundary(ctx, F, r)), len(F))


def is_invariant(ctx: GroupContext, F: FiniteRegion, r: int, eps: float) -> bool:
    return boundary_ratio(ctx, F, r) <= eps


def box(ctx: GroupContext, side_lengths: Sequence[int], offset: Sequence[int] | None = None) -> FiniteRegion:
    """Axis-aligned product of intervals [offset_i, offset_i + side_i)."""
    sides = [int(s) for s in np.atleast_1d(side_lengths)]
    if len(sides) != ctx.dimension:
        raise GeometryError(f"side_lengths has length {len(sides)}, dimension is {ctx.dimension}")
    if offset is None:
        offset = [0] * ctx.dimension
    off = [int(o) for o in np.atleast_1d(offset)]
    if len(off) != ctx.dimension:
        raise GeometryError(f"offset has length {len(off)}, dimension is {ctx.dimension}")
    if any(s < 1 for s in sides):
        raise GeometryError("side lengths must be >= 1")
    axes = [np.arange(o, o + s, dtype=np.int64) for o, s in zip(off, sides)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return FiniteRegion._from_sorted(pts)


def interval(a: int, b: int) -> FiniteRegion:
    """[a, b) in Z."""
    return FiniteRegion._from_sorted(np.arange(a, b, dtype=np.int64).reshape(-1, 1))


def radius_of(ctx: GroupContext, points: Iterable) -> int:
    """max d(e, g) over the given points."""
    pts = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=np.int64)
    pts = pts.reshape(-1, ctx.dimension)
    if pts.shape[0] == 0:
        return 0
    if ctx.is_standard:
        return int(np.abs(pts).sum(axis=1).max())
    return max(ctx.norm(p) for p in pts.tolist())
