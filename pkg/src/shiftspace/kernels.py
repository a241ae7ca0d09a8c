"""Hot inner loops.

Every kernel operates on flat integer arrays laid out over a padded
bounding-box grid (see ``geometry.Grid``).  Padding must be at least the
extent of the offsets used, so flat-index arithmetic never wraps across rows.

Each kernel has a numba build (``_accel.njit``) and, where a vectorised
formulation exists, a numpy twin used when numba is switched off.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

# --------------------------------------------------------------------------
# grid morphology


@njit
def _dilate_loop(mask, deltas):
    n = mask.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        if mask[i]:
            for d in deltas:
                j = i + d
                if 0 <= j < n:
                    out[j] = 1
    return out


@njit
def _erode_loop(mask, deltas):
    n = mask.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        if not mask[i]:
            continue
        ok = 1
        for d in deltas:
            j = i + d
            if j < 0 or j >= n or not mask[j]:
                ok = 0
                break
        out[i] = ok
    return out


def _pull(arr, d, fill):
    """out[i] = arr[i + d], ``fill`` where i + d falls outside."""
    n = arr.shape[0]
    out = np.full(n, fill, dtype=arr.dtype)
    if abs(d) < n:
        if d >= 0:
            out[: n - d] = arr[d:]
        else:
            out[-d:] = arr[: n + d]
    return out


def _dilate_np(mask, deltas):
    # out[j] = 1 iff mask[j - d] for some d
    m = mask.astype(bool)
    out = np.zeros(m.shape[0], dtype=bool)
    for d in deltas:
        out |= _pull(m, -int(d), False)
    return out.astype(np.uint8)


def _erode_np(mask, deltas):
    m = mask.astype(bool)
    out = m.copy()
    for d in deltas:
        out &= _pull(m, int(d), False)
    return out.astype(np.uint8)


@njit
def _same_label_loop(labels, deltas):
    """1 where every offset neighbour carries the same (non-negative) label."""
    n = labels.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        lab = labels[i]
        if lab < 0:
            continue
        ok = 1
        for d in deltas:
            j = i + d
            if j < 0 or j >= n or labels[j] != lab:
                ok = 0
                break
        out[i] = ok
    return out


def _same_label_np(labels, deltas):
    out = labels >= 0
    for d in deltas:
        out &= _pull(labels, int(d), -2) == labels
    return out.astype(np.uint8)


if USE_NUMBA:
    dilate_flat, erode_flat, same_label_flat = _dilate_loop, _erode_loop, _same_label_loop
else:
    dilate_flat, erode_flat, same_label_flat = _dilate_np, _erode_np, _same_label_np


# --------------------------------------------------------------------------
# greedy placement


@njit
def greedy_place(allowed, occupied, corners, tile_deltas, tile_ptr, tile_order):
    """Scan ``corners`` in order; at each, try tiles in ``tile_order``.

    A tile fits when all its cells are ``allowed`` and not yet occupied.
    ``occupied`` is updated in place.  Returns (corner flat index, tile index)
    arrays of the placements, in placement order.
    """
    n = allowed.shape[0]
    out_c = np.empty(corners.shape[0], dtype=np.int64)
    out_t = np.empty(corners.shape[0], dtype=np.int64)
    m = 0
    for c in corners:
        if occupied[c]:
            continue
        for t in tile_order:
            fits = True
            for q in range(tile_ptr[t], tile_ptr[t + 1]):
                j = c + tile_deltas[q]
                if j < 0 or j >= n or not allowed[j] or occupied[j]:
                    fits = False
                    break
            if fits:
                for q in range(tile_ptr[t], tile_ptr[t + 1]):
                    occupied[c + tile_deltas[q]] = 1
                out_c[m] = c
                out_t[m] = t
                m += 1
                break
    return out_c[:m], out_t[:m]


# --------------------------------------------------------------------------
# backtracking enumeration with projection


@njit
def dfs_project(n, n_proj, k, zero, fixed,
                fp_ptr, fp_idx, fp_cells, fp_vals, fp_len,
                cap_ptr, cap_idx, cap_cells, cap_len, cap_max,
                capacity, want_witness, count_only):
    """Enumerate projections of locally admissible assignments.

    Cells ``0..n-1`` are assigned in index order with symbols ``0..k-1``
    (``fixed[i] >= 0`` pins cell ``i``).  A forbidden-pattern constraint is
    checked at its highest cell (CSR ``fp_ptr``/``fp_idx``); a support cap
    is checked at every member cell against the cells assigned so far.

    Only the first ``n_proj`` cells are reported.  After a full assignment is
    found the search jumps straight back to cell ``n_proj - 1``, so every
    projection is emitted once, in lexicographic order, together with one
    witness completion when ``want_witness``.

    Returns ``(patterns, witnesses, count, overflow)``.  With ``count_only``
    nothing is stored and a positive ``capacity`` caps the count.
    """
    out_rows = 0 if count_only else capacity
    out = np.zeros((out_rows, n_proj), dtype=np.int8)
    wit = np.zeros((out_rows if want_witness else 0, n), dtype=np.int8)
    count = 0
    overflow = False
    if n == 0:
        if not count_only and capacity < 1:
            overflow = True
        else:
            count = 1
        return out, wit, count, overflow
    assign = np.full(n, -1, dtype=np.int64)
    depth = 0
    while depth >= 0:
        cur = assign[depth]
        f = fixed[depth]
        if f >= 0:
            v = f if cur < f else k
            stop = f + 1
        else:
            v = cur + 1
            stop = k
        placed = False
        while v < stop:
            assign[depth] = v
            ok = True
            for q in range(fp_ptr[depth], fp_ptr[depth + 1]):
                c = fp_idx[q]
                hit = True
                for t in range(fp_len[c]):
                    if assign[fp_cells[c, t]] != fp_vals[c, t]:
                        hit = False
                        break
                if hit:
                    ok = False
                    break
            if ok and v != zero:
                # a zero never raises a count that was already within its cap
                for q in range(cap_ptr[depth], cap_ptr[depth + 1]):
                    c = cap_idx[q]
                    nz = 0
                    for t in range(cap_len[c]):
                        a = assign[cap_cells[c, t]]
                        if a >= 0 and a != zero:
                            nz += 1
                    if nz > cap_max[c]:
                        ok = False
                        break
            if ok:
                placed = True
                break
            v += 1
        if not placed:
            assign[depth] = -1
            depth -= 1
            continue
        if depth < n - 1:
            depth += 1
            assign[depth] = -1
            continue
        # full assignment
        if count_only and capacity > 0 and count >= capacity:
            overflow = True
            return out, wit, count, overflow
        if not count_only:
            if count >= capacity:
                overflow = True
                return out, wit, count, overflow
            for t in range(n_proj):
                out[count, t] = assign[t]
            if want_witness:
                for t in range(n):
                    wit[count, t] = assign[t]
        count += 1
        if n_proj == 0:
            break
        for t in range(n_proj, n):
            assign[t] = -1
        depth = n_proj - 1
    return out, wit, count, overflow
