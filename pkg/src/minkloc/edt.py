"""Exact squared Euclidean distance transform with nearest-site propagation.

Separable lower-envelope algorithm (one pass of parabola envelopes per
axis) on integer grid coordinates. Squared distances are int64, so results
are exact; every cell also receives the flat index of a nearest site.
"""
from __future__ import annotations

import numpy as np
from numba import config, njit, prange

# the system TBB is too old for numba; prefer OpenMP or the builtin pool
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

INF = np.int64(1) << np.int64(62)


@njit(cache=True)
def _envelope_line(f, anc, n, out_f, out_a, v, z):
    # lower envelope of parabolas (x - q)^2 + f[q] over finite f[q]
    k = -1
    for q in range(n):
        fq = f[q]
        if fq >= INF:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -1e300
            z[1] = 1e300
            continue
        while True:
            p = v[k]
            s = ((fq + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
                if k < 0:
                    break
            else:
                break
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -1e300
            z[1] = 1e300
        else:
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = 1e300
    if k < 0:
        for q in range(n):
            out_f[q] = INF
            out_a[q] = -1
        return
    j = 0
    for q in range(n):
        while z[j + 1] < q:
            j += 1
        p = v[j]
        out_f[q] = (q - p) * (q - p) + f[p]
        out_a[q] = anc[p]


@njit(parallel=True, cache=True)
def _pass_rows(f2, a2):
    # transform along axis 1 of a 2D (rows, n) view, in place
    rows, n = f2.shape
    for i in prange(rows):
        v = np.empty(n, np.int64)
        z = np.empty(n + 1, np.float64)
        of = np.empty(n, np.int64)
        oa = np.empty(n, np.int64)
        _envelope_line(f2[i], a2[i], n, of, oa, v, z)
        for q in range(n):
            f2[i, q] = of[q]
            a2[i, q] = oa[q]


def squared_edt(sites: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Squared distance (in cell units) to the nearest True cell, and its flat index.

    Cells with no site anywhere get INF and anchor -1 (only when ``sites`` is
    empty)."""
    sites = np.asarray(sites, dtype=bool)
    shape = sites.shape
    f = np.where(sites, np.int64(0), INF).astype(np.int64)
    a = np.where(sites, np.arange(sites.size, dtype=np.int64).reshape(shape), np.int64(-1))
    for axis in range(sites.ndim):
        ft = np.ascontiguousarray(np.moveaxis(f, axis, -1))
        at = np.ascontiguousarray(np.moveaxis(a, axis, -1))
        tshape = ft.shape
        f2 = ft.reshape(-1, tshape[-1])
        a2 = at.reshape(-1, tshape[-1])
        _pass_rows(f2, a2)
        f = np.moveaxis(f2.reshape(tshape), -1, axis)
        a = np.moveaxis(a2.reshape(tshape), -1, axis)
    return np.ascontiguousarray(f), np.ascontiguousarray(a)


def brute_squared_edt(sites: np.ndarray) -> np.ndarray:
    """O(cells x sites) reference transform, for testing."""
    sites = np.asarray(sites, dtype=bool)
    idx = np.argwhere(sites).astype(np.int64)
    grid = np.indices(sites.shape).reshape(sites.ndim, -1).T.astype(np.int64)
    best = np.full(len(grid), INF, dtype=np.int64)
    for s in idx:
        d2 = np.sum((grid - s) ** 2, axis=1)
        np.minimum(best, d2, out=best)
    return best.reshape(sites.shape)
