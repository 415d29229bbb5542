"""Compiled grid-traversal kernels.

All kernels work in grid units: x runs along columns, y along rows, and one
unit equals one cell edge.  Callers convert to and from meters.
"""
import math
import os

import numba
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the TBB shipped in some images is too old and numba warns on every import
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@numba.njit(cache=True, nogil=True)
def dda_depth(occ, gx, gy, bearing, max_t):
    """Distance from (gx, gy) to the entry face of the first occupied cell.

    Leaving the grid counts as no hit.  Returns ``max_t`` when nothing is hit
    closer than ``max_t``.
    """
    h, w = occ.shape
    dx = math.cos(bearing)
    dy = math.sin(bearing)
    ix = int(math.floor(gx))
    iy = int(math.floor(gy))
    if dx > 0.0:
        sx = 1
    elif dx < 0.0:
        sx = -1
    else:
        sx = 0
    if dy > 0.0:
        sy = 1
    elif dy < 0.0:
        sy = -1
    else:
        sy = 0
    # boundaries are recomputed from the integer index each step so that
    # round-off does not accumulate along long rays
    while True:
        if sx == 0:
            tx = np.inf
        else:
            bx = ix + 1 if sx > 0 else ix
            tx = (bx - gx) / dx
        if sy == 0:
            ty = np.inf
        else:
            by = iy + 1 if sy > 0 else iy
            ty = (by - gy) / dy
        if tx < ty:
            t = tx
            ix += sx
        else:
            t = ty
            iy += sy
        if t >= max_t:
            return max_t
        if ix < 0 or iy < 0 or ix >= w or iy >= h:
            return max_t
        if occ[iy, ix]:
            return t


@numba.njit(cache=True, parallel=True)
def dda_many(occ, gx, gy, bearings, max_t):
    n = gx.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in numba.prange(n):
        out[i] = dda_depth(occ, gx[i], gy[i], bearings[i], max_t)
    return out


@numba.njit(cache=True, parallel=True)
def dda_table(occ, gx, gy, bearings, max_t):
    """Depth table of shape (n_positions, n_bearings).

    Each row casts every bearing from one position.  Rows are independent,
    so the result does not depend on the thread count.
    """
    n = gx.shape[0]
    m = bearings.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    for i in numba.prange(n):
        for j in range(m):
            out[i, j] = dda_depth(occ, gx[i], gy[i], bearings[j], max_t)
    return out
