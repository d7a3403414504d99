"""Spectral bound and positive eigenvector of a Metzler matrix.

The route: shift the diagonal up until the matrix is non-negative, take the
convergence parameter R_d of the shift, and read off the spectral bound
lambda = 1/R_d - d, which is shift-invariant. Lemma: lambda > g_ii for every
state, so the embedded matrix m_bar_ij = g_ij/(lambda - g_ii) (zero diagonal)
is well defined and non-negative, and the left vector comes out of its taboo
series at weight 1:

    u_i = (1/(lambda - g_ii)) * sum_{n>=1} (k-taboo powers of m_bar at i).

The same quantity has a continuous-time sampling form: excursions of the
minimal Q-process (holding rates q_i = off-diagonal row sums) from k to the
first return, accumulating per-segment integrals of exp((d_i - lambda) t)
where d_i is the full row sum. Both are implemented here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _mckernels
from .convergence import (ConvergenceReport, RecurrenceVerdict, classify_recurrence,
                          convergence_parameter_finite, convergence_parameter_ladder)
from .errors import DomainError, AllTruncated, LemmaViolated, ShiftInadmissible
from .matrix import (FiniteMatrix, FiniteMetzler, LazyMatrix, LazyMetzler,
                     MetzlerSource, ball_restriction, taboo_powers)
from .mc import McConfig, ExcursionEstimate, _alias_tables, _batch_stats, _dispatch
from .series import _run_series


def default_shift(g: MetzlerSource) -> float:
    """d* = max(sup g_ii, sup(-g_ii)) + 1: G + d*I is non-negative with

    positive diagonal. Lazy sources use their declared diagonal bound.
    """
    if isinstance(g, FiniteMetzler):
        if g.n == 0:
            raise DomainError("empty matrix")
        return float(max(g.diag.max(), (-g.diag).max()) + 1.0)
    return float(g.diag_bound + 1.0)


def shifted_source(g: MetzlerSource, d: float):
    """G + dI as a non-negative source; ShiftInadmissible if any g_ii + d < 0."""
    if isinstance(g, FiniteMetzler):
        low = float(g.diag.min())
        if low + d < 0.0:
            raise ShiftInadmissible(
                f"shift {d} leaves a negative diagonal (min g_ii = {low})")
        return FiniteMatrix(g.g + d * np.eye(g.n),
                            assume_irreducible=g.assume_irreducible)

    def row(i: int, _g=g, _d=d):
        cols, vals = _g.row(i)
        out = []
        seen_diag = False
        for j, v in zip(cols, vals):
            j = int(j)
            if j == i:
                seen_diag = True
                v = v + _d
                if v < 0.0:
                    raise ShiftInadmissible(
                        f"shift {_d} leaves g[{i},{i}] + d = {v} negative")
            out.append((j, float(v)))
        if not seen_diag and _d != 0.0:
            out.append((i, float(_d)))
        return out

    return LazyMatrix(row, state_budget=g.state_budget, row_budget=g.row_budget,
                      assume_irreducible=g.assume_irreducible)


@dataclass
class MetzlerSpectral:
    lam: float
    d_used: float
    R_d: float
    k: int
    lemma_check: bool
    report: ConvergenceReport | None = None

    def to_dict(self) -> dict:
        out = {
            "lambda": self.lam,
            "d_used": self.d_used,
            "R_d": self.R_d,
            "k": self.k,
            "lemma_check": self.lemma_check,
        }
        if self.report is not None:
            out["convergence"] = self.report.to_dict()
        return out


def _materialized_diag(g: MetzlerSource) -> np.ndarray:
    if isinstance(g, FiniteMetzler):
        return g.diag
    diag = []
    for i in g._cache:
        cols, vals = g._cache[i]
        hit = vals[cols == i]
        diag.append(float(hit[0]) if hit.size else 0.0)
    return np.asarray(diag) if diag else np.zeros(1)


def spectral_bound(g: MetzlerSource, tol: float = 1e-10, k: int = 0,
                   shift: float | None = None,
                   radii: tuple[int, ...] = (8, 16, 32, 64)) -> MetzlerSpectral:
    """lambda = 1/R_d - d for an admissible shift d (default d*).

    lambda does not depend on the shift; the default just guarantees
    admissibility. Strict dominance lambda > g_ii is asserted on every
    materialized state: a failure beyond tol is a numerical fault, not a
    property of the input.
    """
    d = default_shift(g) if shift is None else float(shift)
    shifted = shifted_source(g, d)
    if isinstance(shifted, FiniteMatrix):
        rep = convergence_parameter_finite(shifted, tol=tol, k=k)
    else:
        rep = convergence_parameter_ladder(shifted, k=k, radii=radii, tol=max(tol, 1e-6))
    lam = 1.0 / rep.R - d
    diag = _materialized_diag(g)
    margin = lam - float(diag.max())
    if margin <= 0.0:
        scale = max(1.0, abs(lam))
        if margin < -tol * scale:
            raise LemmaViolated(
                f"lambda = {lam} does not dominate the diagonal (max g_ii = {diag.max()})")
        return MetzlerSpectral(lam, d, rep.R, k, lemma_check=False, report=rep)
    return MetzlerSpectral(lam, d, rep.R, k, lemma_check=True, report=rep)


def embedded_matrix(g: MetzlerSource, lam: float):
    """m_bar_ij = g_ij/(lambda - g_ii) off the diagonal, exactly 0 on it."""
    if isinstance(g, FiniteMetzler):
        denom = lam - g.diag
        if (denom <= 0.0).any():
            i = int(np.argmax(denom <= 0.0))
            raise LemmaViolated(f"lambda = {lam} <= g[{i},{i}] = {g.diag[i]}")
        m = g.g / denom[:, None]
        np.fill_diagonal(m, 0.0)
        return FiniteMatrix(m, assume_irreducible=g.assume_irreducible)

    def row(i: int, _g=g, _lam=lam):
        cols, vals = _g.row(i)
        dii = 0.0
        for j, v in zip(cols, vals):
            if int(j) == i:
                dii = float(v)
        denom = _lam - dii
        if denom <= 0.0:
            raise LemmaViolated(f"lambda = {_lam} <= g[{i},{i}] = {dii}")
        return [(int(j), float(v) / denom) for j, v in zip(cols, vals) if int(j) != i]

    return LazyMatrix(row, state_budget=g.state_budget, row_budget=g.row_budget,
                      assume_irreducible=g.assume_irreducible)


def embedded_recurrence(mbar, k: int = 0, horizon: int = 2**14,
                        tol: float = 1e-8, radius: int | None = None) -> RecurrenceVerdict:
    """Recurrence of the embedded matrix, i.e. its return series at weight 1."""
    return classify_recurrence(mbar, 1.0, k=k, horizon=horizon, tol=tol, radius=radius)


@dataclass
class MetzlerVector:
    lam: float
    k: int
    horizon: int
    u: dict[int, float] = field(default_factory=dict)
    residual: float = math.nan
    lemma_partial_sum: float = math.nan
    hypotheses_ok: bool = True
    restricted: bool = False

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "k": self.k,
            "horizon": self.horizon,
            "u": {str(i): v for i, v in self.u.items()},
            "residual": self.residual,
            "lemma_partial_sum": self.lemma_partial_sum,
            "hypotheses_ok": self.hypotheses_ok,
            "restricted": self.restricted,
        }


def _metzler_residual(gd: np.ndarray, u: np.ndarray, lam: float,
                      covered: np.ndarray) -> float:
    """|uG - lambda u|_inf / |lambda u|_inf over columns fed only by covered rows."""
    image = u @ gd
    ok_cols = np.ones(gd.shape[0], dtype=bool)
    feeders = gd != 0.0
    for j in range(gd.shape[0]):
        if not covered[feeders[:, j]].all():
            ok_cols[j] = False
    ok_cols &= covered
    if not ok_cols.any():
        return math.nan
    num = np.abs(image[ok_cols] - lam * u[ok_cols]).max()
    den = np.abs(lam * u[ok_cols]).max()
    if den == 0.0:
        return math.inf if num > 0.0 else 0.0
    return float(num / den)


def left_vector_metzler_series(g: MetzlerSource, lam: float, k: int = 0,
                               states=None, horizon: int = 2**18,
                               tol: float = 1e-8, radius: int | None = None) -> MetzlerVector:
    """u_i = (1/(lambda - g_ii)) sum_{n>=1} k-taboo powers of m_bar, at weight 1.

    The k-th series is the return series of m_bar: it reaches 1 exactly when
    m_bar is recurrent (the theorem's hypothesis), so the output carries it
    as lemma_partial_sum and flags hypotheses_ok=False when it visibly falls
    short. The eigen-identity residual |uG - lambda u|/|lambda u| is attached.
    """
    if isinstance(g, LazyMetzler):
        gfin, ids = ball_restriction(g, k, radius if radius is not None else 64)
        k_local = 0
        restricted = True
    else:
        gfin, ids = g, np.arange(g.n, dtype=np.int64)
        k_local = int(k)
        restricted = False
        if radius is not None:
            raise DomainError("radius applies to lazy sources only")
    mbar = embedded_matrix(gfin, lam)
    if states is None:
        targets = np.array([i for i in range(gfin.n) if i != k_local], dtype=np.int64)
    else:
        index = {int(s): i for i, s in enumerate(ids)}
        targets = np.array(sorted(index[int(s)] for s in states if index[int(s)] != k_local),
                           dtype=np.int64)
    stream, _ = _run_series(mbar, 1.0, k_local, targets, horizon, tol)
    denom = lam - gfin.diag
    u_local = np.zeros(gfin.n)
    u_local[targets] = stream.sums[targets] / denom[targets]
    u_local[k_local] = stream.diag_sum / denom[k_local]
    covered = np.zeros(gfin.n, dtype=bool)
    covered[targets] = True
    covered[k_local] = True
    res = _metzler_residual(gfin.g, u_local, lam, covered)
    u = {int(ids[i]): float(u_local[i]) for i in np.flatnonzero(covered)}
    return MetzlerVector(
        lam=lam, k=int(k), horizon=stream.state.n_done, u=u, residual=res,
        lemma_partial_sum=stream.diag_sum,
        hypotheses_ok=stream.diag_sum >= 1.0 - 1e-6,
        restricted=restricted)


@dataclass
class IterateTable:
    """Second-iteration scheme: iterates y^(m) and their running sums.

    y^(1) puts 1/(lambda - g_kk) at k; y^(m+1)_i divides the (k-taboo) m-step
    power of m_bar from k by (lambda - g_ii). Summing reproduces the series
    vector plus the extra first iterate at k:
    sums[-1][i] = series u_i + (i == k)/(lambda - g_kk).
    """

    iterates: np.ndarray   # (n_iters, n)
    sums: np.ndarray       # same shape, cumulative
    k: int
    lam: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "lambda": self.lam,
            "iterates": self.iterates.tolist(),
            "sums": self.sums.tolist(),
        }


def minimal_solution_iterates(g: FiniteMetzler, lam: float, k: int = 0,
                              n_iters: int = 64) -> IterateTable:
    """Iterates of the minimal non-negative solution of the resolvent system.

    All iterates are non-negative and the scheme is monotone in the running
    sum. Finite sources only; truncate a lazy source first.
    """
    if not isinstance(g, FiniteMetzler):
        raise DomainError("iterates need a finite Metzler matrix")
    if n_iters < 1:
        raise DomainError("n_iters must be at least 1")
    denom = lam - g.diag
    if (denom <= 0.0).any():
        i = int(np.argmax(denom <= 0.0))
        raise LemmaViolated(f"lambda = {lam} <= g[{i},{i}] = {g.diag[i]}")
    n = g.n
    out = np.zeros((n_iters, n))
    out[0, k] = 1.0 / denom[k]
    if n_iters > 1:
        mbar = embedded_matrix(g, lam)
        table = taboo_powers(mbar, origin=k, taboo=k, n_max=n_iters - 1)
        for m in range(1, n_iters):
            row = table.rows[m - 1]
            for j, v in row.items():
                out[m, j] = v / denom[j]
    return IterateTable(out, np.cumsum(out, axis=0), int(k), float(lam))


def _jump_sampler(gfin: FiniteMetzler, index: dict[int, int] | None = None):
    """Flat alias/CDF tables for the embedded jump chain g_ij/q_i, j != i."""
    n = gfin.n
    kind = np.zeros(n, dtype=np.uint8)
    ptr = np.zeros(n, dtype=np.int64)
    length = np.zeros(n, dtype=np.int32)
    all_cols, all_prob, all_alias = [], [], []
    off = 0
    q = gfin.q()
    if (q <= 0.0).any():
        i = int(np.argmax(q <= 0.0))
        raise DomainError(f"state {i} has no outgoing rate; the jump chain is stuck")
    for i in range(n):
        row = gfin.g[i].copy()
        row[i] = 0.0
        cols = np.flatnonzero(row > 0.0)
        p = row[cols] / q[i]
        c = cols.astype(np.int64)
        ptr[i] = off
        length[i] = c.size
        if c.size >= 8:
            kind[i] = _mckernels.KIND_ALIAS
            pr, al = _alias_tables(p)
        else:
            kind[i] = _mckernels.KIND_CDF
            pr = np.cumsum(p)
            pr[-1] = max(pr[-1], 1.0)
            al = np.zeros(c.size, dtype=np.int32)
        all_cols.append(c)
        all_prob.append(pr)
        all_alias.append(al)
        off += c.size
    return (kind, ptr, length, np.concatenate(all_cols),
            np.concatenate(all_prob), np.concatenate(all_alias), q)


@dataclass
class CtmcPath:
    """One sampled excursion of the minimal Q-process, for tests and debugging."""

    states: list[int]
    holdings: list[float]
    stop: str  # "returned" | "exited" | "jump-cap" | "time-cap"

    def to_dict(self) -> dict:
        return {"states": self.states, "holdings": self.holdings, "stop": self.stop}


def sample_ctmc_path(g: MetzlerSource, lam: float, cfg: McConfig,
                     b: int = 0, e: int = 0, salt: int = 0,
                     time_cap: float = 1e12,
                     radius: int | None = None) -> CtmcPath:
    """Draws the exact path excursion (b, e) of estimate_metzler_mc would see.

    Holding times and jump targets consume the same counter-based stream as
    the jitted kernel, so the returned path is bit-reproducible.
    """
    from .mc import _sm64_py
    k = cfg.k
    if isinstance(g, LazyMetzler):
        gfin, ids = ball_restriction(g, k, radius if radius is not None else cfg.horizon_cap)
        k_local = 0
    else:
        gfin, ids = g, np.arange(g.n, dtype=np.int64)
        k_local = int(k)
    kind, ptr, length, cols, prob, alias, q = _jump_sampler(gfin)
    mask = (1 << 64) - 1
    st = (cfg.seed + salt * 0x94D049BB133111EB + b * 0x9E3779B97F4A7C15) & mask
    st, _ = _sm64_py(st)
    st, z = _sm64_py((st + e * 0xBF58476D1CE4E5B9) & mask)
    st = z
    x = k_local
    states = [int(ids[x])]
    holdings: list[float] = []
    elapsed = 0.0
    jumps = 0
    while True:
        st, z = _sm64_py(st)
        uh = (z >> 32) * 2.3283064365386963e-10
        h = -math.log(1.0 - uh) / q[x]
        holdings.append(float(h))
        elapsed += h
        st, z = _sm64_py(st)
        u1 = (z >> 32) * 2.3283064365386963e-10
        u2 = (z & 0xFFFFFFFF) * 2.3283064365386963e-10
        x = int(_mckernels._next_state(x, u1, u2, kind, ptr, length, cols, prob, alias))
        jumps += 1
        if x >= 0:
            states.append(int(ids[x]))
        if x == k_local:
            return CtmcPath(states, holdings, "returned")
        if x < 0:
            return CtmcPath(states, holdings, "exited")
        if jumps >= cfg.horizon_cap:
            return CtmcPath(states, holdings, "jump-cap")
        if elapsed >= time_cap:
            return CtmcPath(states, holdings, "time-cap")


# Theorem 1.3 prints the occupation integral with the excursion's own start
# state in the indicator; its proof accumulates at the state the path
# currently occupies, which is what the estimator below does. The report
# carries this reading so it is never applied silently.
_INDICATOR_NOTE = ("occupation integral accumulated at the currently occupied "
                   "state over excursions from k")


def estimate_metzler_mc(g: MetzlerSource, lam: float, cfg: McConfig,
                        time_cap: float = 1e12,
                        radius: int | None = None) -> ExcursionEstimate:
    """CTMC estimator of the Metzler left vector.

    Simulates the minimal Q-process from k until the first jump back, adding
    each holding segment's closed-form integral to the held state. Excursions
    stop early at cfg.horizon_cap jumps or once elapsed time passes time_cap
    (the segment in flight when the time cap trips is still counted in full);
    either way they count as truncated.

    The weights exp((d_i - lam) H) lose their second moment as soon as some
    embedded row sum r_i/(lam - g_ii) reaches 2, and the reported batch SE
    underestimates the error well before that. Estimates stay consistent
    either way, they just converge slowly on such instances; keep SE-based
    decisions to matrices whose row sums are balanced against the diagonal.
    """
    k = cfg.k
    if isinstance(g, LazyMetzler):
        gfin, ids = ball_restriction(g, k, radius if radius is not None else cfg.horizon_cap)
        k_local = 0
        restricted = radius is not None and radius < cfg.horizon_cap
    else:
        gfin, ids = g, np.arange(g.n, dtype=np.int64)
        k_local = int(k)
        restricted = False
    if gfin.n < 2:
        raise DomainError("the jump chain needs at least two states")
    if (lam - gfin.diag <= 0.0).any():
        i = int(np.argmax(lam - gfin.diag <= 0.0))
        raise LemmaViolated(f"lambda = {lam} <= g[{i},{i}] = {gfin.diag[i]}")
    kind, ptr, length, cols, prob, alias, q = _jump_sampler(gfin)
    dsum = gfin.d()
    B = cfg.batches
    per_batch = cfg.n_excursions // B
    acc = np.zeros((B, gfin.n))
    vis = np.zeros((B, gfin.n), dtype=np.int64)
    seed = np.uint64(cfg.seed & ((1 << 64) - 1))

    def run_one(b: int):
        return _mckernels.ctmc_batch(
            seed, np.uint64(0), np.uint64(b), per_batch, cfg.horizon_cap,
            time_cap, lam, k_local, dsum, q, kind, ptr, length, cols, prob,
            alias, acc[b], vis[b])

    results = _dispatch(B, cfg.threads, run_one)
    completed = sum(r[0] for r in results)
    if completed == 0:
        raise AllTruncated(
            f"no excursion returned to {k} within {cfg.horizon_cap} jumps")
    est, se = _batch_stats(acc, per_batch)
    retw = np.array([r[3] for r in results])
    rw_est, rw_se = _batch_stats(retw.reshape(B, 1), per_batch)
    keep = np.flatnonzero(vis.sum(axis=0) > 0)
    return ExcursionEstimate(
        estimate={int(ids[l]): float(est[l]) for l in keep},
        se={int(ids[l]): float(se[l]) for l in keep},
        visits={int(ids[l]): int(vis[:, l].sum()) for l in keep},
        n_excursions=cfg.n_excursions, n_completed=int(completed),
        n_truncated=int(sum(r[1] for r in results)),
        overflow_count=int(sum(r[2] for r in results)),
        seed=cfg.seed, R=math.nan, k=int(k),
        return_weight=float(rw_est[0]), return_weight_se=float(rw_se[0]),
        restricted=restricted, note=_INDICATOR_NOTE)
