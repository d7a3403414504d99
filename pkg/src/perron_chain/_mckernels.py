"""Jitted excursion samplers.

RNG is counter-based: excursion e of batch b under (seed, salt) gets its own
splitmix64 stream, so results are independent of scheduling and identical
however batches are dispatched. One 64-bit draw per step is split into two
32-bit uniforms: slot choice and alias threshold.

Row sampling uses a flat layout over all states: alias tables for rows with
>= 8 entries, inverse-CDF otherwise. A column id of -1 is the exit slot of a
ball-truncated lazy source (probability of leaving the ball); drawing it
truncates the excursion.

Weights are multiplicative (w *= R f(x)) with a log-space fallback once w
passes 1e290; accumulated contributions clamp at 1e300 and count as
overflows. Paths with weights that large are far outside the regime where
the estimator is meaningful, but they must not poison the whole run.
"""

import numpy as np
from numba import njit

KIND_CDF = 0
KIND_ALIAS = 1

_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)
_INV32 = 2.3283064365386963e-10  # 2^-32
_W_SWITCH = 1e290
_W_CLAMP = 1e300
_LOG_CLAMP = 690.7755278982137  # log(1e300)


@njit(cache=True, inline="always")
def _sm64(state):
    state = state + _C1
    z = state
    z = (z ^ (z >> np.uint64(30))) * _C2
    z = (z ^ (z >> np.uint64(27))) * _C3
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, inline="always")
def _stream(seed, salt, b, e):
    st, _ = _sm64(seed + salt * _C3 + b * _C1)
    st, z = _sm64(st + e * _C2)
    return z


@njit(cache=True, inline="always")
def _next_state(x, u1, u2, kind, ptr, length, cols, prob, alias):
    base = ptr[x]
    k = length[x]
    if kind[x] == KIND_ALIAS:
        j = int(u1 * k)
        if u2 < prob[base + j]:
            return cols[base + j]
        return cols[base + alias[base + j]]
    lo = 0
    hi = k - 1
    while lo < hi:
        mid = (lo + hi) >> 1
        if u1 <= prob[base + mid]:
            hi = mid
        else:
            lo = mid + 1
    return cols[base + lo]


@njit(cache=True, nogil=True)
def left_batch(seed, salt, b, n_exc, cap, r, k, f,
               kind, ptr, length, cols, prob, alias, acc, vis):
    """One batch of excursions from k, accumulating W_n at X_n for n < tau.

    Returns (completed, truncated, overflow, return_weight_sum). acc and vis
    are this batch's per-state rows; the n = 0 contribution (weight 1 at k)
    is included for every excursion.
    """
    completed = 0
    truncated = 0
    overflow = 0
    retw = 0.0
    acc[k] += float(n_exc)
    vis[k] += n_exc
    for e in range(n_exc):
        st = _stream(seed, salt, b, np.uint64(e))
        x = k
        w = 1.0
        logw = 0.0
        logmode = False
        n = 0
        while True:
            step = r * f[x]
            if logmode:
                logw += np.log(step)
            else:
                w *= step
                if w > _W_SWITCH:
                    logmode = True
                    logw = np.log(w)
            st, z = _sm64(st)
            u1 = (z >> np.uint64(32)) * _INV32
            u2 = (z & np.uint64(0xFFFFFFFF)) * _INV32
            x = _next_state(x, u1, u2, kind, ptr, length, cols, prob, alias)
            if x < 0:
                truncated += 1
                break
            n += 1
            if logmode:
                if logw > _LOG_CLAMP:
                    wa = _W_CLAMP
                    overflow += 1
                else:
                    wa = np.exp(logw)
            else:
                wa = w
            if x == k:
                retw += wa
                completed += 1
                break
            if n >= cap:
                truncated += 1
                break
            acc[x] += wa
            vis[x] += 1
    return completed, truncated, overflow, retw


@njit(cache=True, nogil=True)
def right_batch(seed, salt, b, n_exc, cap, r, k, start, f,
                kind, ptr, length, cols, prob, alias):
    """One batch of excursions from `start`, accumulating only the hit at k.

    Returns (completed, truncated, overflow, weight_sum): weight_sum totals
    W_tau over excursions that reached k within the cap.
    """
    completed = 0
    truncated = 0
    overflow = 0
    total = 0.0
    for e in range(n_exc):
        st = _stream(seed, salt, b, np.uint64(e))
        x = start
        w = 1.0
        logw = 0.0
        logmode = False
        n = 0
        while True:
            step = r * f[x]
            if logmode:
                logw += np.log(step)
            else:
                w *= step
                if w > _W_SWITCH:
                    logmode = True
                    logw = np.log(w)
            st, z = _sm64(st)
            u1 = (z >> np.uint64(32)) * _INV32
            u2 = (z & np.uint64(0xFFFFFFFF)) * _INV32
            x = _next_state(x, u1, u2, kind, ptr, length, cols, prob, alias)
            if x < 0:
                truncated += 1
                break
            n += 1
            if x == k:
                if logmode:
                    if logw > _LOG_CLAMP:
                        total += _W_CLAMP
                        overflow += 1
                    else:
                        total += np.exp(logw)
                else:
                    total += w
                completed += 1
                break
            if n >= cap:
                truncated += 1
                break
    return completed, truncated, overflow, total


@njit(cache=True, nogil=True)
def ctmc_batch(seed, salt, b, n_exc, cap_jumps, cap_time, lam, k, dsum, qrate,
               kind, ptr, length, cols, prob, alias, acc, vis):
    """One batch of minimal-Q-process excursions from k for the Metzler pipeline.

    State i holds for Exp(qrate[i]) time (qrate = off-diagonal row sum);
    dsum[i] is the full row sum d_i, so the path exponent rate at i is
    dsum[i] - lam. Each holding segment adds the closed-form integral
    W * (exp((d_i - lam) H) - 1)/(d_i - lam) to state i (W * H in the
    removable-singularity case), then the path weight picks up
    exp((d_i - lam) H). Stops at the first jump back to k, on cap_jumps, or
    once elapsed time exceeds cap_time.

    Returns (completed, truncated, overflow, return_weight_sum).
    """
    completed = 0
    truncated = 0
    overflow = 0
    retw = 0.0
    for e in range(n_exc):
        st = _stream(seed, salt, b, np.uint64(e))
        x = k
        logw = 0.0
        elapsed = 0.0
        jumps = 0
        while True:
            st, z = _sm64(st)
            uh = (z >> np.uint64(32)) * _INV32
            h = -np.log(1.0 - uh) / qrate[x]
            a = dsum[x] - lam
            if logw > _LOG_CLAMP:
                seg = _W_CLAMP
                overflow += 1
            else:
                w = np.exp(logw)
                if a > 1e-12 or a < -1e-12:
                    seg = w * np.expm1(a * h) / a
                else:
                    seg = w * h
                if seg > _W_CLAMP:
                    seg = _W_CLAMP
                    overflow += 1
            acc[x] += seg
            vis[x] += 1
            logw += a * h
            elapsed += h
            st, z = _sm64(st)
            u1 = (z >> np.uint64(32)) * _INV32
            u2 = (z & np.uint64(0xFFFFFFFF)) * _INV32
            x = _next_state(x, u1, u2, kind, ptr, length, cols, prob, alias)
            jumps += 1
            if x == k:
                if logw > _LOG_CLAMP:
                    retw += _W_CLAMP
                    overflow += 1
                else:
                    retw += np.exp(logw)
                completed += 1
                break
            if x < 0 or jumps >= cap_jumps or elapsed >= cap_time:
                truncated += 1
                break
    return completed, truncated, overflow, retw
