"""Compiled inner loops for the window scans in ``constraints``."""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def support_window(field, surface, contact, n):
    """Sum ``field`` over contact offsets for every window translation.

    ``surface`` lists the nonzero voxels of ``field`` in lexicographic order and
    ``contact`` the contact offsets (lexicographic, already shifted so that
    translation ``t`` samples ``field[t + contact[k]]``). Scattering surface
    voxels in lexicographic order adds the terms of each window cell in contact
    offset order, which matches a left-to-right gather sum exactly.
    """
    out = np.zeros((n, n, n))
    m = contact.shape[0]
    if m == 0:
        return out
    # contact offsets form contiguous runs per (x, y) column: index them
    x0, y0 = contact[0, 0], contact[:, 1].min()
    nx, ny = contact[m - 1, 0] - x0 + 1, contact[:, 1].max() - y0 + 1
    begin = np.zeros((nx, ny), dtype=np.int64)
    end = np.zeros((nx, ny), dtype=np.int64)
    for k in range(m):
        a, b = contact[k, 0] - x0, contact[k, 1] - y0
        if end[a, b] == 0:
            begin[a, b] = k
        end[a, b] = k + 1
    for s in range(surface.shape[0]):
        sx, sy, sz = surface[s, 0], surface[s, 1], surface[s, 2]
        v = field[sx, sy, sz]
        # only offsets with s - n < offset <= s land inside the window
        for a in range(max(sx - n + 1 - x0, 0), min(sx - x0, nx - 1) + 1):
            for b in range(max(sy - n + 1 - y0, 0), min(sy - y0, ny - 1) + 1):
                for k in range(begin[a, b], end[a, b]):
                    c = sz - contact[k, 2]
                    if 0 <= c < n:
                        out[sx - x0 - a, sy - y0 - b, c] += v
    return out


@numba.njit(cache=True, nogil=True)
def first_feasible(occ, offsets, candidates, t_f):
    """Index of the first candidate whose occupied-offset count is <= t_f.

    Counting stops as soon as a candidate exceeds ``t_f``. Offsets that hit
    are moved toward the front of the visiting order, since neighbouring
    candidates tend to collide at the same body voxels; the counts themselves
    do not depend on the order. Returns (-1, -1) when no candidate is feasible.
    """
    order = np.arange(offsets.shape[0])
    hot = min(64, offsets.shape[0])
    front = 0
    for m in range(candidates.shape[0]):
        a, b, c = candidates[m, 0], candidates[m, 1], candidates[m, 2]
        count = 0
        for k in range(offsets.shape[0]):
            o = order[k]
            if occ[a + offsets[o, 0], b + offsets[o, 1], c + offsets[o, 2]]:
                count += 1
                if k >= hot:
                    order[k] = order[front]
                    order[front] = o
                    front = (front + 1) % hot
                if count > t_f:
                    break
        if count <= t_f:
            return m, count
    return -1, -1


@numba.njit(cache=True, nogil=True)
def stamp_cubes(vol, points, bits, r):
    """OR ``bits[i]`` into the (2r+1)^3 cube around each ``points[i]`` of ``vol``."""
    for i in range(points.shape[0]):
        x, y, z = points[i, 0], points[i, 1], points[i, 2]
        b = bits[i]
        for a in range(x - r, x + r + 1):
            for c in range(y - r, y + r + 1):
                for d in range(z - r, z + r + 1):
                    vol[a, c, d] |= b
    return vol
