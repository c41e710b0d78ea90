"""Hot raster kernels with a numba fast path and a pure-numpy fallback.

The numba path is used automatically when numba imports cleanly; set
``TRAJGEN_NO_NUMBA=1`` to force the numpy fallback. Both paths run the
same arithmetic in the same order, so outputs are bit-identical — the
benchmark in ``benchmarks/bench_kernels.py`` compares their speed.

Pixel-space convention used by every kernel: pixel (row, col) has its
center at (col + 0.5, row + 0.5); callers convert world coordinates to
pixel units beforehand.
"""

from __future__ import annotations

import logging
import math
import os

import numpy as np

log = logging.getLogger(__name__)


def _np_fill_capsules(classes, ax, ay, bx, by, radius, value):
    """Set pixels whose center lies within ``radius`` of any segment."""
    h, w = classes.shape
    r2 = radius * radius
    for i in range(len(ax)):
        lo_x = min(ax[i], bx[i]) - radius - 0.5
        hi_x = max(ax[i], bx[i]) + radius - 0.5
        lo_y = min(ay[i], by[i]) - radius - 0.5
        hi_y = max(ay[i], by[i]) + radius - 0.5
        c0 = max(int(math.ceil(lo_x)), 0)
        c1 = min(int(math.floor(hi_x)), w - 1)
        r0 = max(int(math.ceil(lo_y)), 0)
        r1 = min(int(math.floor(hi_y)), h - 1)
        if c0 > c1 or r0 > r1:
            continue
        px = np.arange(c0, c1 + 1, dtype=np.float64) + 0.5
        py = np.arange(r0, r1 + 1, dtype=np.float64) + 0.5
        apx = px[None, :] - ax[i]
        apy = py[:, None] - ay[i]
        abx = bx[i] - ax[i]
        aby = by[i] - ay[i]
        ab2 = abx * abx + aby * aby
        if ab2 > 0.0:
            t = (apx * abx + apy * aby) / ab2
            t = np.clip(t, 0.0, 1.0)
        else:
            t = np.zeros((r1 - r0 + 1, c1 - c0 + 1))
        dx = apx - t * abx
        dy = apy - t * aby
        hit = dx * dx + dy * dy <= r2
        block = classes[r0:r1 + 1, c0:c1 + 1]
        block[hit] = value


def _np_fill_band(classes, ax, ay, bx, by, arc0, inner, arc_grid, width_grid,
                  value, protect):
    """Set pixels in the band (inner, inner + w(arc)] around segments, where
    w is piecewise-linear over the UNIFORM grid ``arc_grid``; never
    overwrites ``protect``."""
    h, w = classes.shape
    outer_max = inner + float(np.max(width_grid))
    inner2 = inner * inner
    n_cells = len(arc_grid) - 1
    cell_scale = n_cells / arc_grid[-1]
    for i in range(len(ax)):
        lo_x = min(ax[i], bx[i]) - outer_max - 0.5
        hi_x = max(ax[i], bx[i]) + outer_max - 0.5
        lo_y = min(ay[i], by[i]) - outer_max - 0.5
        hi_y = max(ay[i], by[i]) + outer_max - 0.5
        c0 = max(int(math.ceil(lo_x)), 0)
        c1 = min(int(math.floor(hi_x)), w - 1)
        r0 = max(int(math.ceil(lo_y)), 0)
        r1 = min(int(math.floor(hi_y)), h - 1)
        if c0 > c1 or r0 > r1:
            continue
        px = np.arange(c0, c1 + 1, dtype=np.float64) + 0.5
        py = np.arange(r0, r1 + 1, dtype=np.float64) + 0.5
        apx = px[None, :] - ax[i]
        apy = py[:, None] - ay[i]
        abx = bx[i] - ax[i]
        aby = by[i] - ay[i]
        ab2 = abx * abx + aby * aby
        seg_len = math.sqrt(ab2)
        if ab2 > 0.0:
            t = np.clip((apx * abx + apy * aby) / ab2, 0.0, 1.0)
        else:
            t = np.zeros((r1 - r0 + 1, c1 - c0 + 1))
        dx = apx - t * abx
        dy = apy - t * aby
        d2 = dx * dx + dy * dy
        arc = arc0[i] + t * seg_len
        j = np.clip((arc * cell_scale).astype(np.int64), 0, n_cells - 1)
        tt = np.clip((arc - arc_grid[j]) / (arc_grid[j + 1] - arc_grid[j]),
                     0.0, 1.0)
        width = width_grid[j] + (width_grid[j + 1] - width_grid[j]) * tt
        outer = inner + width
        block = classes[r0:r1 + 1, c0:c1 + 1]
        hit = (d2 > inner2) & (d2 <= outer * outer) & (block != protect)
        block[hit] = value


def _np_decimate_runs(cum_turn, cum_len, max_turn, max_len, keep_out):
    """Greedy maximal-run vertex selection over prefix sums of per-vertex
    turn and per-segment length. Returns the number of kept vertices."""
    n_seg = len(cum_len) - 1
    cnt = 0
    keep_out[cnt] = 0
    cnt += 1
    s = 0
    while s < n_seg:
        e_turn = int(np.searchsorted(cum_turn, cum_turn[s] + max_turn,
                                     side="right")) - 1
        e_len = int(np.searchsorted(cum_len, cum_len[s] + max_len,
                                    side="right")) - 2
        e = max(s, min(e_turn, e_len, n_seg - 1))
        keep_out[cnt] = e + 1
        cnt += 1
        s = e + 1
    return cnt


def _np_capsule_hits(classes, ax, ay, bx, by, radius):
    """True if any non-background pixel center lies within ``radius`` of any
    segment (early-exit proximity test used for disconnected-road placement)."""
    h, w = classes.shape
    r2 = radius * radius
    for i in range(len(ax)):
        lo_x = min(ax[i], bx[i]) - radius - 0.5
        hi_x = max(ax[i], bx[i]) + radius - 0.5
        lo_y = min(ay[i], by[i]) - radius - 0.5
        hi_y = max(ay[i], by[i]) + radius - 0.5
        c0 = max(int(math.ceil(lo_x)), 0)
        c1 = min(int(math.floor(hi_x)), w - 1)
        r0 = max(int(math.ceil(lo_y)), 0)
        r1 = min(int(math.floor(hi_y)), h - 1)
        if c0 > c1 or r0 > r1:
            continue
        block = classes[r0:r1 + 1, c0:c1 + 1]
        if not block.any():
            continue
        px = np.arange(c0, c1 + 1, dtype=np.float64) + 0.5
        py = np.arange(r0, r1 + 1, dtype=np.float64) + 0.5
        apx = px[None, :] - ax[i]
        apy = py[:, None] - ay[i]
        abx = bx[i] - ax[i]
        aby = by[i] - ay[i]
        ab2 = abx * abx + aby * aby
        if ab2 > 0.0:
            t = np.clip((apx * abx + apy * aby) / ab2, 0.0, 1.0)
        else:
            t = np.zeros((r1 - r0 + 1, c1 - c0 + 1))
        dx = apx - t * abx
        dy = apy - t * aby
        if ((dx * dx + dy * dy <= r2) & (block != 0)).any():
            return True
    return False


def _np_chain_walk(row_ptr, dests, cums, initial_cum, newest, mem_ptr, mem_data,
                   centroids, out, ids, state, start_k, buf):
    """Walk the chain consuming uniforms from ``buf``; one transition and one
    member draw per step, one extra draw per dead-end restart.

    Returns (steps done, state, uniforms consumed, status, restarts) with
    status 1 = finished, 0 = buffer exhausted, 2 = no usable transitions.
    """
    i = 0
    k = start_k
    n_states = len(initial_cum)
    restarts = 0
    while k < len(out):
        guard = 0
        while row_ptr[state + 1] == row_ptr[state]:
            if i >= len(buf):
                return k, state, i, 0, restarts
            idx = int(np.searchsorted(initial_cum, buf[i], side="right"))
            i += 1
            state = min(idx, n_states - 1)
            restarts += 1
            guard += 1
            if guard > 10000:
                return k, state, i, 2, restarts
        if i + 2 > len(buf):
            return k, state, i, 0, restarts
        lo = row_ptr[state]
        hi = row_ptr[state + 1]
        j = lo + int(np.searchsorted(cums[lo:hi], buf[i], side="right"))
        i += 1
        state = int(dests[min(j, hi - 1)])
        nid = int(newest[state])
        m_lo = mem_ptr[nid]
        m_hi = mem_ptr[nid + 1]
        um = buf[i]
        i += 1
        if m_hi > m_lo:
            midx = m_lo + int(um * (m_hi - m_lo))
            midx = min(midx, m_hi - 1)
            out[k, 0] = mem_data[midx, 0]
            out[k, 1] = mem_data[midx, 1]
        else:
            out[k, 0] = centroids[nid, 0]
            out[k, 1] = centroids[nid, 1]
        ids[k] = nid
        k += 1
    return k, state, i, 1, restarts


def _np_resample_rotated(classes, x0, y_top, res, cx, cy, heading, out_size):
    """Nearest-neighbor resample of a rotated, centered crop.

    Output pixel (r, c) center sits at offset ((c-half)*res, (half-r)*res)
    from (cx, cy) in the heading-up frame. Returns (crop, out-of-bounds count).
    """
    h, w = classes.shape
    half = out_size // 2
    ang = heading - math.pi / 2.0
    ca = math.cos(ang)
    sa = math.sin(ang)
    c = np.arange(out_size, dtype=np.float64)
    r = np.arange(out_size, dtype=np.float64)
    dx = (c[None, :] - half) * res
    dy = (half - r[:, None]) * res
    wx = cx + (ca * dx - sa * dy)
    wy = cy + (sa * dx + ca * dy)
    col = np.floor((wx - x0) / res).astype(np.int64)
    row = np.floor((y_top - wy) / res).astype(np.int64)
    inside = (row >= 0) & (row < h) & (col >= 0) & (col < w)
    out = np.zeros((out_size, out_size), dtype=np.uint8)
    out[inside] = classes[row[inside], col[inside]]
    return out, int(inside.size - np.count_nonzero(inside))


_DISABLED = os.environ.get("TRAJGEN_NO_NUMBA", "").strip() not in ("", "0")

_KERNEL_NAMES = ("fill_capsules", "fill_band", "capsule_hits", "chain_walk",
                 "resample_rotated", "decimate_runs")

numpy_impl = {
    "fill_capsules": _np_fill_capsules,
    "fill_band": _np_fill_band,
    "capsule_hits": _np_capsule_hits,
    "chain_walk": _np_chain_walk,
    "resample_rotated": _np_resample_rotated,
    "decimate_runs": _np_decimate_runs,
}
numba_impl = None

if not _DISABLED:
    try:
        from trajgen import _numba_kernels

        numba_impl = {name: getattr(_numba_kernels, name) for name in _KERNEL_NAMES}
    except ImportError as exc:  # pragma: no cover - depends on environment
        log.warning("numba unavailable (%s); using pure-numpy kernels", exc)

_active = numba_impl if numba_impl is not None else numpy_impl

fill_capsules = _active["fill_capsules"]
fill_band = _active["fill_band"]
capsule_hits = _active["capsule_hits"]
chain_walk = _active["chain_walk"]
resample_rotated = _active["resample_rotated"]
decimate_runs = _active["decimate_runs"]


def backend() -> str:
    """Name of the kernel backend in use ('numba' or 'numpy')."""
    return "numba" if _active is numba_impl else "numpy"
