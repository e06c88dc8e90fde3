"""Independent reference implementations used by the tests.

These are written from the definitions, by direct gather over explicit
loops, and share no code with the package beyond its data types.
"""

from __future__ import annotations

import itertools

import numpy as np
from numba import njit


@njit(cache=True)
def naive_correlate(field, kernel, out):
    """out[i] = sum_o kernel[o] * field[clamp(i + o - r)], one voxel at a time."""
    nx, ny, nz = field.shape
    kx, ky, kz = kernel.shape
    rx, ry, rz = kx // 2, ky // 2, kz // 2
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                acc = out[i, j, k] * 0
                for a in range(kx):
                    x = min(max(i + a - rx, 0), nx - 1)
                    for b in range(ky):
                        y = min(max(j + b - ry, 0), ny - 1)
                        for c in range(kz):
                            z = min(max(k + c - rz, 0), nz - 1)
                            acc += kernel[a, b, c] * field[x, y, z]
                out[i, j, k] = acc
    return out


def correlate_oracle(field, kernel):
    field = np.asarray(field)
    kernel = np.asarray(kernel)
    out = np.zeros(field.shape, dtype=np.result_type(field.dtype, kernel.dtype))
    return naive_correlate(field, kernel, out)


def _inside(grid, p):
    return all(0 <= p[d] < grid.shape[d] for d in range(3))


def free_response_oracle(body_points, free_space) -> int:
    """Occupied or out-of-grid voxels among ``body_points``."""
    n = 0
    for p in body_points:
        n += 1 if not _inside(free_space, p) else int(free_space[tuple(p)])
    return n


def support_response_oracle(contact_points, support) -> float:
    """Left-to-right sum of the support field over ``contact_points``."""
    acc = 0.0
    for p in contact_points:
        acc += float(support[tuple(p)]) if _inside(support, p) else 0.0
    return acc


def _gather(grid, pts, fill):
    dims = np.array(grid.shape)
    ok = np.all((pts >= 0) & (pts < dims), axis=1)
    vals = np.full(len(pts), fill, dtype=np.float64)
    q = pts[ok]
    vals[ok] = grid[q[:, 0], q[:, 1], q[:, 2]]
    return vals


def exhaustive_window(body, contact, anchor, free_space, support, radius, t_f):
    """Every window translation with its (R_f, R_s), plus the documented winner.

    The winner is the feasible translation (R_f <= t_f) with the largest R_s,
    then the smallest squared length, then the lexicographically smallest.
    Returns (winner, best_r_s, table) with winner None if nothing is feasible.
    """
    table = {}
    for t in itertools.product(range(-radius, radius + 1), repeat=3):
        shift = anchor + np.array(t)
        r_f = int(_gather(free_space, body + shift, 1.0).sum())
        vals = _gather(support, contact + shift, 0.0)
        r_s = float(np.cumsum(vals)[-1]) if len(vals) else 0.0
        table[t] = (r_f, r_s)
    feasible = [(t, rs) for t, (rf, rs) in table.items() if rf <= t_f]
    if not feasible:
        return None, None, table
    best = max(rs for _, rs in feasible)
    ties = [t for t, rs in feasible if rs == best]
    winner = min(ties, key=lambda t: (sum(x * x for x in t), t))
    return np.array(winner), best, table
