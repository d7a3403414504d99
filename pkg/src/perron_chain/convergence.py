"""Convergence parameter R and R-recurrence classification.

For a finite irreducible non-negative matrix, R = 1/rho(A); rho comes from
power iteration with growth factors averaged over one graph period so that
periodic matrices (plain cycles, bipartite structures) converge too. For
lazily generated infinite matrices, R is bracketed from above by a ladder of
growing principal-submatrix truncations.

Recurrence at a given r is decided through the return series
S_N = sum_{n<=N} r^n (taboo return weight at k): exactly 1 at r = R when
R-recurrent, strictly below 1 when R-transient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from ._stream import DEFAULT_HORIZON_CAP, TabooStream, graph_period, perron_growth, stride_tail
from .errors import DomainError, HypothesesUnmet, LadderNotMonotone
from .matrix import FiniteMatrix, LazyMatrix, MatrixSource, ball_restriction, is_irreducible

R_RECURRENT = "R-recurrent"
R_TRANSIENT = "R-transient"
UNDETERMINED = "undetermined"

METHOD_FINITE = "dense-oracle"
METHOD_LADDER = "truncation-ladder"
METHOD_MODEL = "analytic-model"

# power iteration is always pushed near machine precision regardless of the
# caller's tol: the lemma partial sums are evaluated at the estimated R, and
# an estimate off by eps overshoots the unit sum by roughly eps times the
# mean return length
_PI_TOL = 1e-13
_PI_BUDGET = 10**7


@dataclass
class ConvergenceReport:
    R: float
    method: str
    recurrence: str
    lemma_partial_sum: float
    horizon: int
    k: int
    rho: float = 0.0
    iterations: int = 0
    period: int = 1
    radii: tuple[int, ...] = ()
    ladder: tuple[float, ...] = ()
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "method": self.method,
            "recurrence": self.recurrence,
            "lemma_partial_sum": self.lemma_partial_sum,
            "horizon": self.horizon,
            "k": self.k,
            "rho": self.rho,
            "iterations": self.iterations,
            "period": self.period,
            "radii": list(self.radii),
            "ladder": list(self.ladder),
            "converged": self.converged,
        }


def _lemma_sum(fin: FiniteMatrix, r: float, k: int, goal: float,
               horizon_cap: int) -> tuple[float, int]:
    """Advance the return series at k until it reaches `goal` or the cap."""
    stream = TabooStream(fin, r, k, k, keep=256)
    chunk = 256
    while (stream.state.status == "running" and stream.diag_sum < goal
           and stream.state.n_done < horizon_cap):
        stream.advance(min(chunk, horizon_cap - stream.state.n_done))
        chunk = min(2 * chunk, 1 << 16)
    stream.raise_on_overflow()
    return stream.diag_sum, stream.state.n_done


def convergence_parameter_finite(src: MatrixSource, tol: float = 1e-8, k: int = 0,
                                 *, horizon_cap: int = DEFAULT_HORIZON_CAP) -> ConvergenceReport:
    """R = 1/rho for a finite irreducible non-negative matrix.

    The report carries the return-series partial sum at k, advanced until it
    clears 1 - 10*tol (Lemma check: the full sum is exactly 1, finite
    irreducible matrices being always R-recurrent).
    """
    if not isinstance(src, FiniteMatrix):
        raise DomainError("convergence_parameter_finite needs a finite matrix source")
    rep = is_irreducible(src)
    if not rep.irreducible:
        raise HypothesesUnmet(f"matrix is not irreducible: {rep.describe()}")
    d = graph_period(src, root=k)
    rho, iters, _ = perron_growth(src, tol=min(tol, _PI_TOL), budget=_PI_BUDGET, period=d)
    R = 1.0 / rho
    s, n = _lemma_sum(src, R, k, goal=1.0 - 10.0 * tol, horizon_cap=horizon_cap)
    return ConvergenceReport(
        R=R, method=METHOD_FINITE, recurrence=R_RECURRENT,
        lemma_partial_sum=s, horizon=n, k=k,
        rho=rho, iterations=iters, period=d,
        converged=s >= 1.0 - 10.0 * tol)


def _scc_containing(fin: FiniteMatrix, root: int) -> FiniteMatrix:
    """Principal submatrix on the strongly connected component of `root`."""
    n_comp, labels = connected_components(fin.csr, directed=True, connection="strong")
    if n_comp == 1:
        return fin
    keep = np.flatnonzero(labels == labels[root])
    sub = fin.csr[keep][:, keep].tocsr()
    return FiniteMatrix(sub)


def convergence_parameter_ladder(src: MatrixSource, k: int = 0,
                                 radii: tuple[int, ...] = (8, 16, 32, 64),
                                 tol: float = 1e-4) -> ConvergenceReport:
    """R via a ladder of ball truncations around k (lazy infinite sources).

    Each rung restricts to the states within graph distance `radius` of k,
    keeps the strongly connected component of k, and solves the finite
    problem. Spectral radii of principal submatrices grow with the ball, so
    the R estimates must be nonincreasing; a violation beyond rounding slack
    raises LadderNotMonotone. The final rung's R is returned, with
    `converged` set when the last two rungs agree to relative tol.

    The lemma partial sum is evaluated on the final truncation at its own R
    (the truncation is finite and recurrent there); at the extrapolated R the
    infinite series is not summable to fixed horizon. Recurrence of the
    infinite source is left undetermined: see classify_recurrence.
    """
    if isinstance(src, FiniteMatrix):
        return convergence_parameter_finite(src, tol=tol, k=k)
    if not radii:
        raise DomainError("ladder needs at least one radius")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise DomainError(f"radii must be strictly increasing, got {radii}")

    ladder: list[float] = []
    last: FiniteMatrix | None = None
    for radius in radii:
        fin, ids = ball_restriction(src, k, radius)
        sub = _scc_containing(fin, int(np.flatnonzero(ids == k)[0]))
        rho, _, _ = perron_growth(sub, tol=min(tol * 1e-6, _PI_TOL), budget=_PI_BUDGET)
        R = 1.0 / rho
        if ladder and R > ladder[-1] * (1.0 + 1e-9):
            raise LadderNotMonotone(
                f"R rose from {ladder[-1]!r} to {R!r} at radius {radius}")
        ladder.append(R)
        last = sub

    converged = len(ladder) < 2 or abs(ladder[-1] - ladder[-2]) <= tol * abs(ladder[-1])
    assert last is not None
    root_last = 0  # ball_restriction lists the root first and the SCC keeps it
    s, n = _lemma_sum(last, ladder[-1], root_last, goal=1.0 - 10.0 * tol,
                      horizon_cap=DEFAULT_HORIZON_CAP)
    return ConvergenceReport(
        R=ladder[-1], method=METHOD_LADDER, recurrence=UNDETERMINED,
        lemma_partial_sum=s, horizon=n, k=k,
        rho=1.0 / ladder[-1], iterations=0, period=graph_period(last),
        radii=tuple(int(r) for r in radii), ladder=tuple(ladder),
        converged=converged)


@dataclass
class RecurrenceVerdict:
    classification: str
    partial_sum: float
    horizon: int
    tail_estimate: float = math.nan
    tail_ratio: float = math.nan

    def to_dict(self) -> dict:
        return {
            "classification": self.classification,
            "partial_sum": self.partial_sum,
            "horizon": self.horizon,
            "tail_estimate": self.tail_estimate,
            "tail_ratio": self.tail_ratio,
        }


def classify_recurrence(src: MatrixSource, R: float, k: int = 0,
                        horizon: int = 2**14, tol: float = 1e-8,
                        radius: int | None = None) -> RecurrenceVerdict:
    """Classify R-recurrence from the return series S_N at state k.

    R-recurrent when S_N >= 1 - tol (the full sum is exactly 1 in that
    case, so partial sums crossing the threshold settle it). R-transient
    when the series provably stops short: either the recursion died (taboo
    paths exhausted, the sum is complete) or a geometric tail bound keeps
    S below 1 - tol. Anything else is undetermined: in particular terms
    with polynomial decay, whose trailing-window ratio sits within one
    reciprocal window length of 1, are never extrapolated.

    Lazy sources are evaluated on a ball around k wide enough to cover the
    diffusive range of length-`horizon` return paths (override with
    `radius`); states outside contribute nothing to returns that short.
    """
    if isinstance(src, LazyMatrix):
        if radius is None:
            radius = min((horizon + 1) // 2, max(64, int(4.0 * math.sqrt(horizon)) + 8))
        fin, ids = ball_restriction(src, k, radius)
        k_local = int(np.flatnonzero(ids == k)[0])
    else:
        fin, k_local = src, k

    d = graph_period(fin, root=k_local)
    stream = TabooStream(fin, R, k_local, k_local, keep=max(1024, horizon // 4))
    chunk = 512
    while stream.state.status == "running" and stream.state.n_done < horizon:
        stream.advance(min(chunk, horizon - stream.state.n_done))
        chunk = min(2 * chunk, 1 << 15)
        if stream.diag_sum >= 1.0 - tol:
            break

    s = stream.diag_sum
    n = stream.state.n_done
    if s >= 1.0 - tol or stream.state.status == "overflow":
        # overflow means the partial sums blew through 1 inside a chunk
        return RecurrenceVerdict(R_RECURRENT, s, n)
    if stream.state.status == "died":
        return RecurrenceVerdict(R_TRANSIENT, s, n, tail_estimate=0.0, tail_ratio=0.0)

    window, _, _ = stream.window(frac=0.1)
    tail, ratio, usable = stride_tail(window, d)
    if usable and s + tail < 1.0 - tol:
        return RecurrenceVerdict(R_TRANSIENT, s, n, tail_estimate=tail, tail_ratio=ratio)
    return RecurrenceVerdict(UNDETERMINED, s, n, tail_estimate=tail, tail_ratio=ratio)
