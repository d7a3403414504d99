"""Jitted CSR loops shared by the convergence and series modules.

Single-core friendly: both kernels run a chunk of iterations per call so the
Python-level callers can do adaptive stopping between chunks without paying
per-step dispatch overhead.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OVERFLOW_LIMIT = 1e300

STATUS_OK = 0
STATUS_OVERFLOW = 1
STATUS_DIED = 2


@njit(cache=True)
def masked_series_chunk(indptr, indices, data, r, taboo, origin, v, sums,
                        mon_idx, terms_out, totals_out, diag_out, steps):
    """Advance the weighted taboo recursion ``steps`` times.

    ``v`` holds the current term vector (weight^n * taboo-power row); each
    step zeroes the taboo coordinate, multiplies by the matrix from the left
    and folds in the weight ``r``. ``sums`` accumulates the series. Per-step
    records: monitored coordinates (``mon_idx`` -> ``terms_out``), total term
    mass excluding the origin coordinate (``totals_out``), and the origin
    coordinate itself (``diag_out``).

    Returns (status, steps_done). STATUS_DIED means the masked vector became
    exactly zero (finite support exhausted); STATUS_OVERFLOW means a term
    left the representable range.
    """
    n = v.shape[0]
    out = np.zeros(n)
    for t in range(steps):
        for j in range(n):
            out[j] = 0.0
        alive = False
        for i in range(n):
            w = v[i]
            if w == 0.0 or i == taboo:
                continue
            w *= r
            for p in range(indptr[i], indptr[i + 1]):
                out[indices[p]] += w * data[p]
        total = 0.0
        big = 0.0
        for j in range(n):
            x = out[j]
            v[j] = x
            if x != 0.0:
                alive = True
                sums[j] += x
                total += x
                ax = abs(x)
                if ax > big:
                    big = ax
        for m in range(mon_idx.shape[0]):
            terms_out[t, m] = v[mon_idx[m]]
        diag_out[t] = v[origin]
        totals_out[t] = total - v[origin]
        if big > OVERFLOW_LIMIT or big != big:
            return STATUS_OVERFLOW, t + 1
        if not alive:
            return STATUS_DIED, t + 1
    return STATUS_OK, steps


@njit(cache=True)
def power_chunk(indptr, indices, data, x, growth_out, steps):
    """Right power iteration x <- A x / |A x|_1 recording per-step growth.

    ``x`` must be non-negative with unit 1-norm. Returns (status, steps_done);
    STATUS_DIED flags a zero image (reducible matrix or dead row reached).
    """
    n = x.shape[0]
    y = np.zeros(n)
    for t in range(steps):
        for i in range(n):
            acc = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                acc += data[p] * x[indices[p]]
            y[i] = acc
        g = 0.0
        for i in range(n):
            g += y[i]
        if g <= 0.0 or g != g or g == np.inf:
            return STATUS_DIED, t
        inv = 1.0 / g
        for i in range(n):
            x[i] = y[i] * inv
        growth_out[t] = g
    return STATUS_OK, steps
