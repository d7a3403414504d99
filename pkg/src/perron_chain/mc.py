"""Regenerative Monte Carlo estimation of u, y and total mass.

Excursions of the embedded chain start at the reference state k and run to
the first return. Along the way the path weight W_0 = 1,
W_{n+1} = W_n * R * f(X_n) is accumulated at the visited states: the mean
accumulator is the left vector u (u_k = 1 exactly, from the deterministic
n = 0 term). Right-vector estimates run excursions from each requested start
and keep only the weight at the step that first hits k.

Excursions are i.i.d., so uncertainty comes from plain batch means. The RNG
is counter-based (one splitmix64 stream per (seed, salt, batch, excursion)),
which makes runs bit-identical for a fixed config no matter how batches are
scheduled; batch accumulators merge in batch order.

Lazy sources are materialized on the ball of radius horizon_cap around k
(paths that short cannot leave it). If a smaller ball is forced by the state
budget, transitions that would leave it draw an explicit exit slot and count
as truncated rather than silently renormalizing the row.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _mckernels
from .errors import AllTruncated, DomainError
from .matrix import LazyMatrix, TransitionKernel, ball_restriction

DEFAULT_SEED = 0x5EED
_MASK64 = (1 << 64) - 1


@dataclass
class McConfig:
    seed: int = DEFAULT_SEED
    n_excursions: int = 10**5
    horizon_cap: int = 10**5
    k: int = 0
    batches: int = 32
    threads: int = 1

    def __post_init__(self):
        if self.n_excursions < 1:
            raise DomainError("n_excursions must be at least 1")
        if self.horizon_cap < 1:
            raise DomainError("horizon_cap must be at least 1")
        if self.batches < 1 or self.n_excursions % self.batches != 0:
            raise DomainError(
                f"batches = {self.batches} must divide n_excursions = {self.n_excursions}")
        if self.threads < 1:
            raise DomainError("threads must be at least 1")


@dataclass
class ExcursionEstimate:
    estimate: dict[int, float]
    se: dict[int, float]
    visits: dict[int, int]
    n_excursions: int
    n_completed: int
    n_truncated: int
    overflow_count: int
    seed: int
    R: float
    k: int
    return_weight: float = math.nan
    return_weight_se: float = math.nan
    restricted: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "estimate": {str(s): v for s, v in self.estimate.items()},
            "se": {str(s): v for s, v in self.se.items()},
            "visits": {str(s): v for s, v in self.visits.items()},
            "n_excursions": self.n_excursions,
            "n_completed": self.n_completed,
            "n_truncated": self.n_truncated,
            "overflow_count": self.overflow_count,
            "seed": self.seed,
            "R": self.R,
            "k": self.k,
            "return_weight": self.return_weight,
            "return_weight_se": self.return_weight_se,
            "restricted": self.restricted,
            "note": self.note,
        }


@dataclass
class Sampler:
    """Flat per-state sampling tables over local indices plus true row sums."""

    kind: np.ndarray
    ptr: np.ndarray
    length: np.ndarray
    cols: np.ndarray
    prob: np.ndarray
    alias: np.ndarray
    f: np.ndarray
    ids: np.ndarray                   # local -> global state
    index: dict[int, int] = field(default_factory=dict)
    restricted: bool = False

    @property
    def n(self) -> int:
        return self.f.size


def _alias_tables(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias construction; p sums to 1 up to rounding."""
    k = p.size
    scaled = p * k / p.sum()
    prob = np.ones(k)
    alias = np.zeros(k, dtype=np.int32)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            small.append(g)
        else:
            large.append(g)
    for i in small + large:
        prob[i] = 1.0
    return prob, alias


def build_sampler(kernel: TransitionKernel, k: int, cap: int,
                  radius: int | None = None) -> Sampler:
    """Sampling tables for every state reachable by a capped excursion from k.

    Finite sources take all their states. A lazy source materializes the
    out-ball of radius `cap` (override with `radius`); rows are normalized by
    the TRUE row sum, so any probability mass pointing outside the ball
    becomes an exit slot (column -1) that truncates the excursion.
    """
    src = kernel.source
    if isinstance(src, LazyMatrix):
        _, ids = ball_restriction(src, k, radius if radius is not None else cap)
        # with the default radius = cap, exit slots sit at graph distance cap
        # and capped paths cannot reach them: the sampler is exact
        restricted = radius is not None and radius < cap
    else:
        ids = np.arange(src.n, dtype=np.int64)
        restricted = False
    index = {int(g): l for l, g in enumerate(ids)}
    n = len(ids)

    kind = np.zeros(n, dtype=np.uint8)
    ptr = np.zeros(n, dtype=np.int64)
    length = np.zeros(n, dtype=np.int32)
    all_cols: list[np.ndarray] = []
    all_prob: list[np.ndarray] = []
    all_alias: list[np.ndarray] = []
    f = np.zeros(n)
    off = 0
    for l, g in enumerate(ids):
        g = int(g)
        cols_g, probs = kernel.row(g)
        f[l] = kernel.f(g)
        lcols: list[int] = []
        lp: list[float] = []
        p_exit = 0.0
        for j, p in zip(cols_g, probs):
            lj = index.get(int(j))
            if lj is None:
                p_exit += float(p)
            else:
                lcols.append(lj)
                lp.append(float(p))
        if p_exit > 1e-15:
            lcols.append(-1)
            lp.append(p_exit)
        c = np.asarray(lcols, dtype=np.int64)
        p = np.asarray(lp)
        ptr[l] = off
        length[l] = c.size
        if c.size >= 8:
            kind[l] = _mckernels.KIND_ALIAS
            pr, al = _alias_tables(p)
        else:
            kind[l] = _mckernels.KIND_CDF
            pr = np.cumsum(p)
            pr[-1] = max(pr[-1], 1.0)  # guard rounding so the search always lands
            al = np.zeros(c.size, dtype=np.int32)
        all_cols.append(c)
        all_prob.append(pr)
        all_alias.append(al)
        off += c.size
    return Sampler(kind, ptr, length,
                   np.concatenate(all_cols), np.concatenate(all_prob),
                   np.concatenate(all_alias), f, np.asarray(ids, dtype=np.int64),
                   index, restricted)


def _dispatch(batches: int, threads: int, run_one):
    """Run per-batch jobs, optionally on a thread pool; results land by index."""
    if threads <= 1 or batches == 1:
        return [run_one(b) for b in range(batches)]
    out = [None] * batches
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(run_one, b): b for b in range(batches)}
        for fut, b in futures.items():
            out[b] = fut.result()
    return out


def _batch_stats(rows: np.ndarray, per_batch: int) -> tuple[np.ndarray, np.ndarray]:
    """Point estimate and batch-means SE per column of a (batches, n) table."""
    means = rows / per_batch
    est = means.mean(axis=0)
    if rows.shape[0] > 1:
        se = means.std(axis=0, ddof=1) / math.sqrt(rows.shape[0])
    else:
        se = np.full(rows.shape[1], math.nan)
    return est, se


def estimate_left(kernel: TransitionKernel, R: float, cfg: McConfig) -> ExcursionEstimate:
    """MC left vector: mean accumulated weight per state over excursions from k."""
    smp = build_sampler(kernel, cfg.k, cfg.horizon_cap)
    k_local = smp.index[cfg.k]
    B = cfg.batches
    per_batch = cfg.n_excursions // B
    acc = np.zeros((B, smp.n))
    vis = np.zeros((B, smp.n), dtype=np.int64)
    seed = np.uint64(cfg.seed & _MASK64)

    def run_one(b: int):
        return _mckernels.left_batch(
            seed, np.uint64(0), np.uint64(b), per_batch, cfg.horizon_cap,
            R, k_local, smp.f, smp.kind, smp.ptr, smp.length, smp.cols,
            smp.prob, smp.alias, acc[b], vis[b])

    results = _dispatch(B, cfg.threads, run_one)
    completed = sum(r[0] for r in results)
    truncated = sum(r[1] for r in results)
    overflow = sum(r[2] for r in results)
    if completed == 0:
        raise AllTruncated(
            f"no excursion returned to {cfg.k} within {cfg.horizon_cap} steps")
    est, se = _batch_stats(acc, per_batch)
    retw = np.array([r[3] for r in results])
    rw_est, rw_se = _batch_stats(retw.reshape(B, 1), per_batch)
    keep = np.flatnonzero(vis.sum(axis=0) > 0)
    return ExcursionEstimate(
        estimate={int(smp.ids[l]): float(est[l]) for l in keep},
        se={int(smp.ids[l]): float(se[l]) for l in keep},
        visits={int(smp.ids[l]): int(vis[:, l].sum()) for l in keep},
        n_excursions=cfg.n_excursions, n_completed=int(completed),
        n_truncated=int(truncated), overflow_count=int(overflow),
        seed=cfg.seed, R=R, k=cfg.k,
        return_weight=float(rw_est[0]), return_weight_se=float(rw_se[0]),
        restricted=smp.restricted)


def estimate_right(kernel: TransitionKernel, R: float, cfg: McConfig,
                   starts) -> ExcursionEstimate:
    """MC right vector: weight at the first hit of k, excursions from each start.

    Each start state runs its own cfg.n_excursions excursions on its own RNG
    streams (salted by start position), so adding or removing starts never
    changes another start's estimate.
    """
    starts = [int(s) for s in starts]
    if not starts:
        raise DomainError("estimate_right needs at least one start state")
    smp = build_sampler(kernel, cfg.k, cfg.horizon_cap)
    k_local = smp.index[cfg.k]
    B = cfg.batches
    per_batch = cfg.n_excursions // B
    seed = np.uint64(cfg.seed & _MASK64)

    est: dict[int, float] = {}
    ses: dict[int, float] = {}
    visits: dict[int, int] = {}
    completed = truncated = overflow = 0
    for si, s in enumerate(starts):
        if s not in smp.index:
            raise DomainError(f"start state {s} is outside the sampled ball")
        s_local = smp.index[s]
        salt = np.uint64(si + 1)

        def run_one(b: int, _salt=salt, _s=s_local):
            return _mckernels.right_batch(
                seed, _salt, np.uint64(b), per_batch, cfg.horizon_cap,
                R, k_local, _s, smp.f, smp.kind, smp.ptr, smp.length,
                smp.cols, smp.prob, smp.alias)

        results = _dispatch(B, cfg.threads, run_one)
        comp_s = sum(r[0] for r in results)
        if comp_s == 0:
            raise AllTruncated(
                f"no excursion from {s} reached {cfg.k} within {cfg.horizon_cap} steps")
        totals = np.array([r[3] for r in results])
        e, sse = _batch_stats(totals.reshape(B, 1), per_batch)
        est[s] = float(e[0])
        ses[s] = float(sse[0])
        visits[s] = int(comp_s)
        completed += comp_s
        truncated += sum(r[1] for r in results)
        overflow += sum(r[2] for r in results)
    return ExcursionEstimate(
        estimate=est, se=ses, visits=visits,
        n_excursions=cfg.n_excursions * len(starts), n_completed=int(completed),
        n_truncated=int(truncated), overflow_count=int(overflow),
        seed=cfg.seed, R=R, k=cfg.k, restricted=smp.restricted)


@dataclass
class McScalar:
    value: float
    se: float
    n_completed: int
    n_truncated: int
    overflow_count: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "se": self.se,
            "n_completed": self.n_completed,
            "n_truncated": self.n_truncated,
            "overflow_count": self.overflow_count,
        }


def estimate_total_mass(kernel: TransitionKernel, R: float, cfg: McConfig) -> McScalar:
    """MC total mass sum_i u_i: all accumulated weight per excursion.

    For a stochastic matrix at R = 1 this is the mean return time to k.
    """
    smp = build_sampler(kernel, cfg.k, cfg.horizon_cap)
    k_local = smp.index[cfg.k]
    B = cfg.batches
    per_batch = cfg.n_excursions // B
    acc = np.zeros((B, smp.n))
    vis = np.zeros((B, smp.n), dtype=np.int64)
    seed = np.uint64(cfg.seed & _MASK64)

    def run_one(b: int):
        return _mckernels.left_batch(
            seed, np.uint64(0), np.uint64(b), per_batch, cfg.horizon_cap,
            R, k_local, smp.f, smp.kind, smp.ptr, smp.length, smp.cols,
            smp.prob, smp.alias, acc[b], vis[b])

    results = _dispatch(B, cfg.threads, run_one)
    completed = sum(r[0] for r in results)
    if completed == 0:
        raise AllTruncated(
            f"no excursion returned to {cfg.k} within {cfg.horizon_cap} steps")
    per_batch_mass = acc.sum(axis=1)
    e, se = _batch_stats(per_batch_mass.reshape(B, 1), per_batch)
    return McScalar(float(e[0]), float(se[0]), int(completed),
                    int(sum(r[1] for r in results)),
                    int(sum(r[2] for r in results)))


# -----------------------------------------------------------------------------
# single-excursion reference path (pure python, same RNG draws as the kernels)
# -----------------------------------------------------------------------------

def _sm64_py(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z = z ^ (z >> 31)
    return state, z


@dataclass
class Excursion:
    acc: dict[int, float]
    steps: int
    completed: bool
    return_weight: float | None


def sample_excursion(kernel: TransitionKernel, R: float, cfg: McConfig,
                     b: int = 0, e: int = 0, salt: int = 0) -> Excursion:
    """One excursion, step by step, drawing the exact stream the kernels use.

    Mainly a reference for tests and debugging: the accumulator of
    (seed, salt, b, e) here matches the corresponding excursion inside
    estimate_left bit for bit.
    """
    smp = build_sampler(kernel, cfg.k, cfg.horizon_cap)
    k_local = smp.index[cfg.k]
    st = (cfg.seed + salt * 0x94D049BB133111EB + b * 0x9E3779B97F4A7C15) & _MASK64
    st, _ = _sm64_py(st)
    st, z = _sm64_py((st + e * 0xBF58476D1CE4E5B9) & _MASK64)
    st = z
    x = k_local
    w = 1.0
    acc = {int(smp.ids[k_local]): 1.0}
    n = 0
    while True:
        w *= R * smp.f[x]
        st, z = _sm64_py(st)
        u1 = (z >> 32) * 2.3283064365386963e-10
        u2 = (z & 0xFFFFFFFF) * 2.3283064365386963e-10
        base = smp.ptr[x]
        klen = smp.length[x]
        if smp.kind[x] == _mckernels.KIND_ALIAS:
            j = int(u1 * klen)
            if u2 < smp.prob[base + j]:
                x = int(smp.cols[base + j])
            else:
                x = int(smp.cols[base + smp.alias[base + j]])
        else:
            lo, hi = 0, klen - 1
            while lo < hi:
                mid = (lo + hi) >> 1
                if u1 <= smp.prob[base + mid]:
                    hi = mid
                else:
                    lo = mid + 1
            x = int(smp.cols[base + lo])
        if x < 0:
            return Excursion(acc, n, False, None)
        n += 1
        if x == k_local:
            return Excursion(acc, n, True, w)
        if n >= cfg.horizon_cap:
            return Excursion(acc, n, False, None)
        g = int(smp.ids[x])
        acc[g] = acc.get(g, 0.0) + w
