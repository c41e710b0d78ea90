"""Numba @njit twins of the raster kernels in :mod:`trajgen.kernels`.

Arithmetic mirrors the numpy fallback expression-for-expression (and
fastmath stays off) so both backends produce bit-identical rasters.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def fill_capsules(classes, ax, ay, bx, by, radius, value):
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
        abx = bx[i] - ax[i]
        aby = by[i] - ay[i]
        ab2 = abx * abx + aby * aby
        for row in range(r0, r1 + 1):
            py = row + 0.5
            for col in range(c0, c1 + 1):
                px = col + 0.5
                apx = px - ax[i]
                apy = py - ay[i]
                if ab2 > 0.0:
                    t = (apx * abx + apy * aby) / ab2
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                else:
                    t = 0.0
                dx = apx - t * abx
                dy = apy - t * aby
                if dx * dx + dy * dy <= r2:
                    classes[row, col] = value


@njit(cache=True, nogil=True)
def fill_band(classes, ax, ay, bx, by, arc0, inner, arc_grid, width_grid,
              value, protect):
    h, w = classes.shape
    outer_max = inner + np.max(width_grid)
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
        abx = bx[i] - ax[i]
        aby = by[i] - ay[i]
        ab2 = abx * abx + aby * aby
        seg_len = math.sqrt(ab2)
        for row in range(r0, r1 + 1):
            py = row + 0.5
            for col in range(c0, c1 + 1):
                if classes[row, col] == protect:
                    continue
                px = col + 0.5
                apx = px - ax[i]
                apy = py - ay[i]
                if ab2 > 0.0:
                    t = (apx * abx + apy * aby) / ab2
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                else:
                    t = 0.0
                dx = apx - t * abx
                dy = apy - t * aby
                d2 = dx * dx + dy * dy
                if d2 <= inner2:
                    continue
                arc = arc0[i] + t * seg_len
                j = int(arc * cell_scale)
                if j < 0:
                    j = 0
                elif j > n_cells - 1:
                    j = n_cells - 1
                tt = (arc - arc_grid[j]) / (arc_grid[j + 1] - arc_grid[j])
                if tt < 0.0:
                    tt = 0.0
                elif tt > 1.0:
                    tt = 1.0
                width = width_grid[j] + (width_grid[j + 1] - width_grid[j]) * tt
                outer = inner + width
                if d2 <= outer * outer:
                    classes[row, col] = value


@njit(cache=True, nogil=True)
def decimate_runs(cum_turn, cum_len, max_turn, max_len, keep_out):
    n_seg = len(cum_len) - 1
    cnt = 0
    keep_out[cnt] = 0
    cnt += 1
    s = 0
    while s < n_seg:
        lim_turn = cum_turn[s] + max_turn
        lim_len = cum_len[s] + max_len
        e = s
        while e + 1 <= n_seg - 1 and cum_turn[e + 1] <= lim_turn \
                and cum_len[e + 2] <= lim_len:
            e += 1
        keep_out[cnt] = e + 1
        cnt += 1
        s = e + 1
    return cnt


@njit(cache=True, nogil=True)
def capsule_hits(classes, ax, ay, bx, by, radius):
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
        abx = bx[i] - ax[i]
        aby = by[i] - ay[i]
        ab2 = abx * abx + aby * aby
        for row in range(r0, r1 + 1):
            py = row + 0.5
            for col in range(c0, c1 + 1):
                if classes[row, col] == 0:
                    continue
                px = col + 0.5
                apx = px - ax[i]
                apy = py - ay[i]
                if ab2 > 0.0:
                    t = (apx * abx + apy * aby) / ab2
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                else:
                    t = 0.0
                dx = apx - t * abx
                dy = apy - t * aby
                if dx * dx + dy * dy <= r2:
                    return True
    return False


@njit(cache=True, nogil=True)
def chain_walk(row_ptr, dests, cums, initial_cum, newest, mem_ptr, mem_data,
               centroids, out, ids, state, start_k, buf):
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


@njit(cache=True, nogil=True)
def resample_rotated(classes, x0, y_top, res, cx, cy, heading, out_size):
    h, w = classes.shape
    half = out_size // 2
    ang = heading - math.pi / 2.0
    ca = math.cos(ang)
    sa = math.sin(ang)
    out = np.zeros((out_size, out_size), dtype=np.uint8)
    oob = 0
    for r in range(out_size):
        dy = (half - r) * res
        for c in range(out_size):
            dx = (c - half) * res
            wx = cx + (ca * dx - sa * dy)
            wy = cy + (sa * dx + ca * dy)
            col = int(math.floor((wx - x0) / res))
            row = int(math.floor((y_top - wy) / res))
            if 0 <= row < h and 0 <= col < w:
                out[r, c] = classes[row, col]
            else:
                oob += 1
    return out, oob
