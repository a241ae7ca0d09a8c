"""Tile sets and disjoint quasi-tilings of finite windows.

Windowed convention: every placed tile-translate lies wholly inside the
window; cells near the window edge that no translate covers are errors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .entropy import BoundCertificate, qp_bound
from .geometry import (FiniteRegion, GroupContext, Grid, boundary_ratio, box, erode,
                       radius_of)
from .patterns import Alphabet, Pattern, SFT, check_gluing


class TilingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TileSet:
    ctx: GroupContext
    tiles: tuple

    def __post_init__(self):
        tiles = tuple(self.tiles)
        if not tiles:
            raise TilingError("a tile set needs at least one tile")
        origin = self.ctx.identity
        for i, t in enumerate(tiles):
            if t.dimension != self.ctx.dimension:
                raise TilingError(f"tile {i} has the wrong dimension")
            if origin not in t:
                raise TilingError(f"tile {i} does not contain the identity")
        object.__setattr__(self, "tiles", tiles)

    def __len__(self) -> int:
        return len(self.tiles)

    def __eq__(self, other) -> bool:
        return isinstance(other, TileSet) and self.ctx == other.ctx and self.tiles == other.tiles

    def __hash__(self) -> int:
        return hash((self.ctx, self.tiles))

    @cached_property
    def radius(self) -> int:
        return max(radius_of(self.ctx, t.points) for t in self.tiles)

    @cached_property
    def placement_order(self) -> np.ndarray:
        """Tile indices by descending size, ties by index."""
        return np.array(sorted(range(len(self.tiles)), key=lambda i: (-len(self.tiles[i]), i)), dtype=np.int64)

    def concat(self, other: "TileSet") -> tuple["TileSet", np.ndarray]:
        """Union of the two tile lists (duplicates merged) and the index map for ``other``."""
        tiles = list(self.tiles)
        remap = []
        for t in other.tiles:
            if t in tiles:
                remap.append(tiles.index(t))
            else:
                tiles.append(t)
                remap.append(len(tiles) - 1)
        return TileSet(self.ctx, tuple(tiles)), np.array(remap, dtype=np.int64)

    def to_json(self) -> list:
        return [t.to_json() for t in self.tiles]

    @classmethod
    def from_json(cls, obj, ctx: GroupContext | None = None) -> "TileSet":
        if isinstance(obj, dict):
            ctx = GroupContext.from_json(obj)
            obj = obj["tiles"]
        tiles = [FiniteRegion.from_json(t, ctx.dimension if ctx else None) for t in obj]
        if ctx is None:
            ctx = GroupContext(tiles[0].dimension)
        return cls(ctx, tuple(tiles))

    @classmethod
    def boxes(cls, ctx: GroupContext, sides: Iterable[int | Sequence[int]]) -> "TileSet":
        out = []
        for s in sides:
            s = [s] * ctx.dimension if isinstance(s, (int, np.integer)) else list(s)
            out.append(box(ctx, s))
        return cls(ctx, tuple(out))


def _translate_cells(ts: TileSet, corners: np.ndarray, tile_idx: np.ndarray) -> list[np.ndarray]:
    return [ts.tiles[t].points + c for c, t in zip(corners, tile_idx)]


class QuasiTiling:
    """Disjoint placements ``corner . T_i`` inside a window."""

    def __init__(self, window: FiniteRegion, tileset: TileSet, corners, tile_idx, *, check: bool = True):
        d = window.dimension
        corners = np.asarray(corners, dtype=np.int64).reshape(-1, d)
        tile_idx = np.asarray(tile_idx, dtype=np.int64).reshape(-1)
        if corners.shape[0] != tile_idx.shape[0]:
            raise TilingError("corner and tile arrays differ in length")
        if tile_idx.size and (tile_idx.min() < 0 or tile_idx.max() >= len(tileset)):
            raise TilingError("tile index out of range")
        order = np.lexsort(corners.T[::-1]) if corners.shape[0] else np.zeros(0, np.int64)
        corners, tile_idx = corners[order], tile_idx[order]
        if corners.shape[0] > 1 and np.any(np.all(corners[1:] == corners[:-1], axis=1)):
            raise TilingError("two placements share a corner")
        corners.setflags(write=False)
        tile_idx.setflags(write=False)
        self.window = window
        self.tileset = tileset
        self.corners = corners
        self.tile_idx = tile_idx
        if check:
            self._validate()

    def _validate(self):
        if not len(self):
            return
        cells = np.vstack(_translate_cells(self.tileset, self.corners, self.tile_idx))
        idx = self.window.indices_of(cells)
        if np.any(idx < 0):
            raise TilingError("a tile-translate leaves the window")
        if np.unique(idx).shape[0] != idx.shape[0]:
            raise TilingError("tile-translates overlap")

    def __len__(self) -> int:
        return self.corners.shape[0]

    def __repr__(self) -> str:
        return f"QuasiTiling({len(self)} placements, window of {len(self.window)} cells)"

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuasiTiling):
            return NotImplemented
        return (self.window == other.window and self.tileset == other.tileset
                and np.array_equal(self.corners, other.corners) and np.array_equal(self.tile_idx, other.tile_idx))

    @property
    def placements(self) -> list[tuple[tuple[int, ...], int]]:
        return [(tuple(c), int(t)) for c, t in zip(self.corners.tolist(), self.tile_idx.tolist())]

    def corner_set(self) -> set:
        return {tuple(c) for c in self.corners.tolist()}

    def translates(self) -> list[FiniteRegion]:
        return [FiniteRegion._from_sorted(p) for p in _translate_cells(self.tileset, self.corners, self.tile_idx)]

    @cached_property
    def owner(self) -> np.ndarray:
        """Placement index covering each window cell (window order), -1 when uncovered."""
        own = np.full(len(self.window), -1, dtype=np.int64)
        for k, cells in enumerate(_translate_cells(self.tileset, self.corners, self.tile_idx)):
            own[self.window.indices_of(cells)] = k
        own.setflags(write=False)
        return own

    def covered(self) -> FiniteRegion:
        return FiniteRegion._from_sorted(self.window.points[self.owner >= 0])

    def uncovered(self) -> FiniteRegion:
        return FiniteRegion._from_sorted(self.window.points[self.owner < 0])

    def is_sub_tiling_of(self, other: "QuasiTiling") -> bool:
        """Inclusion order: every placement of self is a placement of other (same tile)."""
        theirs = {(c, other.tileset.tiles[t]) for c, t in other.placements}
        return all((c, self.tileset.tiles[t]) in theirs for c, t in self.placements)

    def translate(self, v) -> "QuasiTiling":
        v = np.asarray(v, dtype=np.int64)
        return QuasiTiling(self.window.translate(v), self.tileset, self.corners + v, self.tile_idx, check=False)

    def restrict(self, window: FiniteRegion) -> "QuasiTiling":
        """Placements whose translate lies inside ``window``."""
        keep = [k for k, cells in enumerate(_translate_cells(self.tileset, self.corners, self.tile_idx))
                if np.all(window.indices_of(cells) >= 0)]
        return QuasiTiling(window, self.tileset, self.corners[keep], self.tile_idx[keep], check=False)

    def marker_rows(self, W: FiniteRegion) -> np.ndarray:
        """Symbol 1+i at corners of tile i inside W, 0 elsewhere (W order)."""
        row = np.zeros(len(W), dtype=np.int8)
        if len(self):
            idx = W.indices_of(self.corners)
            ok = idx >= 0
            row[idx[ok]] = self.tile_idx[ok] + 1
        return row

    def to_json(self) -> dict:
        return {"dimension": self.window.dimension, "window": self.window.to_json(),
                "tileset": self.tileset.to_json(),
                "placements": [{"corner": list(c), "tile": t} for c, t in self.placements]}

    @classmethod
    def from_json(cls, obj: dict, ctx: GroupContext | None = None) -> "QuasiTiling":
        dim = obj.get("dimension", ctx.dimension if ctx else None)
        window = FiniteRegion.from_json(obj["window"], dim)
        if ctx is None:
            ctx = GroupContext.from_json({"dimension": window.dimension, **({"generators": obj["generators"]}
                                                                            if "generators" in obj else {})})
        ts = TileSet.from_json(obj["tileset"], ctx)
        pl = obj.get("placements", [])
        corners = [[p["corner"]] if isinstance(p["corner"], int) else p["corner"] for p in pl]
        return cls(window, ts, np.array(corners, dtype=np.int64).reshape(-1, window.dimension),
                   [int(p["tile"]) for p in pl])


def empty_tiling(ts: TileSet, window: FiniteRegion) -> QuasiTiling:
    return QuasiTiling(window, ts, np.zeros((0, window.dimension), np.int64), [])


# --------------------------------------------------------------------------
# construction


def _tile_csr(ts: TileSet, grid: Grid):
    deltas = [grid.deltas(t.points) for t in ts.tiles]
    ptr = np.zeros(len(deltas) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(d) for d in deltas])
    return np.concatenate(deltas).astype(np.int64), ptr


def _extent(ts: TileSet) -> int:
    return max(int(np.abs(t.points).max()) if len(t) else 0 for t in ts.tiles)


def greedy_maximal(ts: TileSet, window: FiniteRegion, allowed: FiniteRegion | None = None) -> QuasiTiling:
    """Scan corners lexicographically, trying tiles largest first; place whatever fits.

    Tiles are placed inside ``allowed`` (default: the whole window).
    """
    if len(window) == 0:
        raise TilingError("window must be nonempty")
    region = window if allowed is None else allowed
    grid = Grid.around(window.points, _extent(ts))
    mask = np.zeros(grid.size, dtype=np.uint8)
    mask[grid.flat(region.points)] = 1
    occupied = np.zeros(grid.size, dtype=np.uint8)
    corners = grid.flat(region.points)
    deltas, ptr = _tile_csr(ts, grid)
    c, t = kernels.greedy_place(mask, occupied, corners, deltas, ptr, ts.placement_order)
    return QuasiTiling(window, ts, grid.unflat(c), t, check=False)


def is_maximal(T: QuasiTiling) -> bool:
    """No tile-translate inside the window avoids every placed translate."""
    ts, window = T.tileset, T.window
    grid = Grid.around(window.points, _extent(ts))
    mask = np.zeros(grid.size, dtype=np.uint8)
    mask[grid.flat(window.points)] = 1
    occupied = np.zeros(grid.size, dtype=np.uint8)
    occupied[grid.flat(T.covered().points)] = 1
    deltas, ptr = _tile_csr(ts, grid)
    c, _ = kernels.greedy_place(mask, occupied, grid.flat(window.points), deltas, ptr, ts.placement_order)
    return c.shape[0] == 0


def combine(first: QuasiTiling, *others: QuasiTiling) -> QuasiTiling:
    """Keep every placement of the accumulated tiling; add those of the next one that avoid it. Folds left."""
    out = first
    for S in others:
        if S.window != out.window:
            raise TilingError("tilings live on different windows")
        ts, remap = out.tileset.concat(S.tileset)
        taken = out.owner >= 0
        add_c, add_t = [], []
        for cells, c, t in zip(_translate_cells(S.tileset, S.corners, S.tile_idx), S.corners, S.tile_idx):
            if not np.any(taken[S.window.indices_of(cells)]):
                add_c.append(c)
                add_t.append(remap[t])
        corners = np.vstack([out.corners] + [np.array(add_c).reshape(-1, out.window.dimension)])
        tiles = np.concatenate([out.tile_idx, np.array(add_t, dtype=np.int64)])
        out = QuasiTiling(out.window, ts, corners, tiles, check=False)
    return out


def prune(T: QuasiTiling, keep: Iterable) -> QuasiTiling:
    keep = {tuple(int(x) for x in np.atleast_1d(k)) for k in keep}
    corners = T.corner_set()
    missing = keep - corners
    if missing:
        raise TilingError(f"not a corner of the tiling: {sorted(missing)[0]}")
    sel = [i for i, c in enumerate(T.corners.tolist()) if tuple(c) in keep]
    return QuasiTiling(T.window, T.tileset, T.corners[sel], T.tile_idx[sel], check=False)


# --------------------------------------------------------------------------
# measurement


def tileset_invariance(ts: TileSet, r: int, eps: float) -> list[dict]:
    out = []
    for i, t in enumerate(ts.tiles):
        rho = boundary_ratio(ts.ctx, t, r)
        out.append({"tile": i, "size": len(t), "rho": rho, "passed": rho <= eps})
    return out


def error_count(T: QuasiTiling, F: FiniteRegion | None = None) -> int:
    F = T.window if F is None else F
    idx = T.window.indices_of(F.points)
    if np.any(idx < 0):
        raise TilingError("F is not inside the tiling window")
    return int(np.count_nonzero(T.owner[idx] < 0))


def error_density(T: QuasiTiling, F: FiniteRegion | None = None) -> tuple[float, float]:
    """(e(T, F)/|F|, rho_1(F))."""
    F = T.window if F is None else F
    return error_count(T, F) / len(F), float(boundary_ratio(T.tileset.ctx, F, 1))


@dataclass(frozen=True)
class ExteriorLabeling:
    region: FiniteRegion
    ext: np.ndarray  # bool, region order
    r: int

    def exterior(self) -> FiniteRegion:
        return FiniteRegion._from_sorted(self.region.points[self.ext])

    def interior(self) -> FiniteRegion:
        return FiniteRegion._from_sorted(self.region.points[~self.ext])

    def is_ext(self, g) -> bool:
        return bool(self.ext[self.region.index[tuple(np.atleast_1d(g).tolist())]])

    def density(self, F: FiniteRegion | None = None) -> float:
        if F is None:
            return float(self.ext.mean()) if len(self.region) else 0.0
        idx = self.region.indices_of(F.points)
        if np.any(idx < 0):
            raise TilingError("F is not inside the labelled region")
        return float(self.ext[idx].mean())


def exterior(T: QuasiTiling, r: int) -> ExteriorLabeling:
    """ext at g iff g is uncovered or lies within distance r of the complement of its own translate."""
    if r < 1:
        raise TilingError("r must be positive")
    ctx = T.tileset.ctx
    offs = ctx.ball_offsets(int(r))
    pad = int(np.abs(offs).max())
    grid = Grid.around(T.window.points, pad)
    labels = np.full(grid.size, -1, dtype=np.int64)
    labels[grid.flat(T.window.points)] = T.owner
    inner = kernels.same_label_flat(labels, grid.deltas(offs))
    ext = inner[grid.flat(T.window.points)] == 0
    ext.setflags(write=False)
    return ExteriorLabeling(T.window, ext, int(r))


def qp_entropy_bound(hQ: float, r: int) -> BoundCertificate:
    """h(Q) + (2/r) log(3r)."""
    return qp_bound(hQ, r)


@dataclass(frozen=True)
class CompatibilityVerdict:
    passed: bool
    worst_ratio: float
    worst_corner: tuple | None
    worst_tile: int | None
    tested: int


def compatibility_check(T: QuasiTiling, R: TileSet, eps: float, margin: int | None = None) -> CompatibilityVerdict:
    """e(T, hR_i) <= eps |R_i| for every translate hR_i inside the window eroded by ``margin`` (default r(R))."""
    m = R.radius if margin is None else int(margin)
    inner = erode(R.ctx, T.window, m) if m else T.window
    errs = (T.owner < 0).astype(np.int64)
    worst, where, which, tested = -1.0, None, None, 0
    for i, tile in enumerate(R.tiles):
        if len(inner) == 0:
            break
        cells = inner.points[:, None, :] + tile.points[None, :, :]
        idx = inner.indices_of(cells.reshape(-1, inner.dimension)).reshape(len(inner), len(tile))
        ok = np.all(idx >= 0, axis=1)
        if not ok.any():
            continue
        widx = T.window.indices_of(cells[ok].reshape(-1, inner.dimension)).reshape(-1, len(tile))
        ratio = errs[widx].sum(axis=1) / len(tile)
        tested += ratio.shape[0]
        j = int(np.argmax(ratio))
        if ratio[j] > worst:
            worst, where, which = float(ratio[j]), tuple(inner.points[ok][j].tolist()), i
    if tested == 0:
        raise TilingError("window too small for any test translate")
    return CompatibilityVerdict(worst <= eps + 1e-12, worst, where, which, tested)


# --------------------------------------------------------------------------
# tiling families and certificates


def orbit_sample(ts: TileSet, W: FiniteRegion, shift_radius: int | None = None) -> list[QuasiTiling]:
    """Restrictions to W of the shifts of one greedy tiling of W's neighbourhood.

    The base tiling lives on W dilated by ``2 r + s`` (r = tile radius,
    s = shift radius, default 2r); each shift by an offset in B_s is
    restricted back to W.  This is the finite family the tiling-entropy
    estimate and the low-entropy approximation draw from.
    """
    from .geometry import dilate

    ctx = ts.ctx
    s = 2 * ts.radius if shift_radius is None else int(shift_radius)
    D0 = dilate(ctx, W, 2 * ts.radius + s)
    base = greedy_maximal(ts, D0)
    return [base.translate(v).restrict(W) for v in ctx.ball_offsets(s)]


def tiling_pattern_entropy(sample: Sequence[QuasiTiling], W: FiniteRegion) -> float:
    """log(#distinct corner-marker patterns on W) / |W|."""
    rows = np.array([T.marker_rows(W) for T in sample])
    n = np.unique(rows, axis=0).shape[0] if rows.size else 1
    return math.log(n) / len(W)


def maximal_tiling_sft(ts: TileSet) -> SFT:
    """Corner-marker SFT: symbol 1+i marks a corner of tile i.

    Overlapping translates are forbidden pairwise; maximality forbids an
    all-blank neighbourhood around any position where a tile would fit.  The
    maximality rule is exact for single-tile sets and gives a superset
    otherwise.
    """
    ctx = ts.ctx
    n = len(ts)
    alphabet = Alphabet(tuple(range(n + 1)), 0)
    forbidden = []
    for i, Ti in enumerate(ts.tiles):
        for j, Tj in enumerate(ts.tiles):
            # v such that Ti and v + Tj meet
            diffs = np.unique((Ti.points[:, None, :] - Tj.points[None, :, :]).reshape(-1, ctx.dimension), axis=0)
            for v in diffs:
                if not v.any():
                    continue  # one symbol per cell already excludes a shared corner
                pts = np.vstack([np.zeros((1, ctx.dimension), np.int64), v.reshape(1, -1)])
                order = np.lexsort(pts.T[::-1])
                vals = np.array([i + 1, j + 1])[order]
                forbidden.append(Pattern(FiniteRegion(pts[order]), vals))
    for Ti in ts.tiles:
        reach = np.unique(np.vstack([(Ti.points[:, None, :] - Tj.points[None, :, :]).reshape(-1, ctx.dimension)
                                     for Tj in ts.tiles]), axis=0)
        S = FiniteRegion(reach)
        forbidden.append(Pattern(S, np.zeros(len(S), dtype=np.int8)))
    return SFT(ctx, alphabet, tuple(dict.fromkeys(forbidden)), name="maximal tilings")


@dataclass
class TilesetCertificate:
    passed: bool
    windows: list = field(default_factory=list)
    failure: dict | None = None


def certify_tileset(ts: TileSet, eps: float, windows: Sequence[FiniteRegion], r: int = 1,
                    gluing: bool = True, gluing_margin: int | None = None) -> TilesetCertificate:
    """Finite-window stand-in for eps-goodness.

    Per window: (a) greedy error density <= eps, (b) the orbit-sample tiling
    entropy <= eps, and once for the tile set (c) the corner-marker SFT passes
    the gluing test at radius 4 r(ts).  ``r`` is the boundary radius reported
    alongside the density.
    """
    rows, failure = [], None
    for k, W in enumerate(windows):
        T = greedy_maximal(ts, W)
        dens = error_count(T, W) / len(W)
        rho = float(boundary_ratio(ts.ctx, W, r))
        h = tiling_pattern_entropy(orbit_sample(ts, W), W)
        row = {"window": k, "size": len(W), "rho": rho, "error_density": dens, "tiling_entropy": h,
               "density_ok": dens <= eps + 1e-12, "entropy_ok": h <= eps + 1e-12}
        rows.append(row)
        if failure is None and not row["density_ok"]:
            failure = {"window": k, "clause": "error density"}
        if failure is None and not row["entropy_ok"]:
            failure = {"window": k, "clause": "tiling entropy"}
    if gluing and failure is None:
        sft = maximal_tiling_sft(ts)
        gap = 4 * ts.radius
        origin = FiniteRegion([[0] * ts.ctx.dimension])
        far = origin.translate([gap + 1] + [0] * (ts.ctx.dimension - 1))
        margin = max(1, sft.window_radius) if gluing_margin is None else gluing_margin
        verdict = check_gluing(sft, max(gap, 1), origin, far, margin)
        rows.append({"gluing_radius": gap, "gluing_ok": verdict.passed})
        if not verdict.passed:
            failure = {"window": None, "clause": "gluing"}
    return TilesetCertificate(failure is None, rows, failure)


def hierarchy_tiling(ctx: GroupContext, window: FiniteRegion, L: int, levels: int = 3) -> QuasiTiling:
    """Nested box levels (sides L, 2L, 4L, ...) tiled greedily and combined coarse to fine."""
    tilings = [greedy_maximal(TileSet.boxes(ctx, [L * 2 ** k]), window) for k in range(levels - 1, -1, -1)]
    return combine(*tilings)


# --------------------------------------------------------------------------
# SVG


_PALETTE = ["#4e79a7", "#f28e2b", "#59a14f", "#b07aa1", "#76b7b2", "#edc948", "#9c755f", "#bab0ac"]


def render_svg(T: QuasiTiling, cell: int = 12) -> str:
    """Static SVG: translates coloured by tile index, uncovered cells crossed.  d = 1 draws a strip."""
    d = T.window.dimension
    if d > 2:
        raise TilingError("SVG output supports dimension 1 or 2")
    pts = T.window.points if d == 2 else np.hstack([np.zeros((len(T.window), 1), np.int64), T.window.points])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    h, w = (hi - lo + 1) * cell
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">']
    for (y, x), own in zip((pts - lo).tolist(), T.owner.tolist()):
        px, py = x * cell, y * cell
        if own >= 0:
            color = _PALETTE[int(T.tile_idx[own]) % len(_PALETTE)]
            parts.append(f'<rect x="{px}" y="{py}" width="{cell}" height="{cell}" fill="{color}" '
                         f'stroke="#ffffff" stroke-width="0.5" data-placement="{own}"/>')
        else:
            parts.append(f'<rect x="{px}" y="{py}" width="{cell}" height="{cell}" fill="#eeeeee" class="error"/>')
            parts.append(f'<path d="M{px} {py}L{px + cell} {py + cell}M{px + cell} {py}L{px} {py + cell}" '
                         f'stroke="#d62728" stroke-width="1"/>')
    parts.append("</svg>")
    return "\n".join(parts)
