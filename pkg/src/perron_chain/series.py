"""Left and right Perron vectors as weighted taboo-power series.

The left vector at reference state k is u_i = sum_{n>=1} R^n (taboo weight
of n-step paths k -> i avoiding k in between), with u_k = 1. The right
vector y is the same series run on the transposed matrix. Both are evaluated
by streaming the recursion v <- R * (v with the k-th coordinate zeroed) @ A,
so the weight is folded in per step and convergent series never leave the
representable range.

Horizons are adaptive: chunks double until the geometric tail estimate of
every requested coordinate drops below tol times its partial sum, up to the
cap. Lazy sources are evaluated on a ball truncation around k and the result
is flagged restricted; states outside the ball would only contribute through
paths longer than the ball radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._stream import DEFAULT_HORIZON_CAP, TabooStream, graph_period, stride_tail
from .errors import DomainError
from .matrix import FiniteMatrix, LazyMatrix, MatrixSource, ball_restriction

_DEFAULT_LAZY_RADIUS = 64
_MAX_MONITORS = 128


@dataclass
class EigenPair:
    eigenvalue: float
    k: int
    horizon: int
    u: dict[int, float] = field(default_factory=dict)
    y: dict[int, float] = field(default_factory=dict)
    residual_left: float = math.nan
    residual_right: float = math.nan
    truncation_tail_estimate: float = math.nan
    lemma_partial_sum: float = math.nan
    restricted: bool = False

    def to_dict(self) -> dict:
        return {
            "eigenvalue": self.eigenvalue,
            "k": self.k,
            "horizon": self.horizon,
            "u": {str(i): v for i, v in self.u.items()},
            "y": {str(i): v for i, v in self.y.items()},
            "residual_left": self.residual_left,
            "residual_right": self.residual_right,
            "truncation_tail_estimate": self.truncation_tail_estimate,
            "lemma_partial_sum": self.lemma_partial_sum,
            "restricted": self.restricted,
        }


def _prepare(src: MatrixSource, k: int, radius: int | None):
    """Finite matrix to stream on, local index of k, id map, restricted flag."""
    if isinstance(src, LazyMatrix):
        fin, ids = ball_restriction(src, k, radius if radius is not None else _DEFAULT_LAZY_RADIUS)
        return fin, 0, ids, True
    if radius is not None:
        raise DomainError("radius applies to lazy sources only")
    n = src.n
    ids = np.arange(n, dtype=np.int64)
    return src, int(k), ids, False


def _local_targets(ids: np.ndarray, k_local: int, states) -> np.ndarray:
    if states is None:
        return np.array([i for i in range(len(ids)) if i != k_local], dtype=np.int64)
    index = {int(s): i for i, s in enumerate(ids)}
    out = []
    for s in sorted(states):
        if int(s) not in index:
            raise DomainError(f"state {s} is outside the evaluated truncation")
        if index[int(s)] != k_local:
            out.append(index[int(s)])
    return np.array(sorted(out), dtype=np.int64)


def _run_series(fin: FiniteMatrix, r: float, k_local: int, targets: np.ndarray,
                horizon: int, tol: float) -> tuple[TabooStream, float]:
    """Stream until every target's tail clears tol, the recursion dies, or the cap.

    Monitored coordinates get individual stride-aware tail fits; when there
    are more targets than the monitor budget, the rest are covered by the
    (conservative) tail of the per-step totals, which dominates every
    coordinate's tail.
    """
    monitors = targets[:_MAX_MONITORS]
    rest = targets[_MAX_MONITORS:]
    stream = TabooStream(fin, r, k_local, k_local, monitors=monitors)
    d = graph_period(fin, root=k_local)
    chunk = 256
    tail_rel = math.inf
    while stream.state.status == "running" and stream.state.n_done < horizon:
        stream.advance(min(chunk, horizon - stream.state.n_done))
        chunk = min(2 * chunk, 1 << 16)
        diag_w, mon_w, tot_w = stream.window(frac=0.1)
        worst = 0.0
        ok = True
        dtail, _, dok = stride_tail(diag_w, d)
        if not dok or dtail > tol:
            ok = False
        for m in range(monitors.size):
            s = stream.sums[monitors[m]]
            tail, _, usable = stride_tail(np.ascontiguousarray(mon_w[:, m]), d)
            if not usable or (s > 0.0 and tail > tol * s):
                ok = False
                break
            if s > 0.0:
                worst = max(worst, tail / s)
        if ok and rest.size:
            ttail, _, tok = stride_tail(tot_w, d)
            smin = float(np.min(stream.sums[rest]))
            if not tok or (smin > 0.0 and ttail > tol * smin) or smin == 0.0:
                ok = False
            else:
                worst = max(worst, ttail / smin)
        if ok:
            tail_rel = worst
            break
    stream.raise_on_overflow()
    if stream.state.status == "died":
        tail_rel = 0.0
    return stream, tail_rel


def left_vector_series(src: MatrixSource, R: float, k: int = 0, states=None,
                       horizon: int = DEFAULT_HORIZON_CAP, tol: float = 1e-8,
                       radius: int | None = None) -> EigenPair:
    """u_i = sum_n R^n (k-taboo path weight k -> i), u_k = 1.

    `states` picks the reported coordinates (default: everything evaluated).
    The k-th diagonal series is accumulated alongside and stored as
    lemma_partial_sum; it reaches 1 on R-recurrent instances and doubles as
    a health check of the supplied R.
    """
    fin, k_local, ids, restricted = _prepare(src, k, radius)
    targets = _local_targets(ids, k_local, states)
    stream, tail_rel = _run_series(fin, R, k_local, targets, horizon, tol)
    u = {int(k): 1.0}
    for t in targets:
        u[int(ids[t])] = float(stream.sums[t])
    return EigenPair(
        eigenvalue=1.0 / R, k=int(k), horizon=stream.state.n_done, u=u,
        truncation_tail_estimate=tail_rel, lemma_partial_sum=stream.diag_sum,
        restricted=restricted)


def right_vector_series(src: MatrixSource, R: float, k: int = 0, states=None,
                        horizon: int = DEFAULT_HORIZON_CAP, tol: float = 1e-8,
                        radius: int | None = None) -> EigenPair:
    """y_i = sum_n R^n (k-taboo path weight i -> k), y_k = 1.

    Same series as the left vector on the transposed matrix: reversing every
    k-avoiding path i -> k gives a k-avoiding path k -> i in the transpose.
    """
    fin, k_local, ids, restricted = _prepare(src, k, radius)
    targets = _local_targets(ids, k_local, states)
    stream, tail_rel = _run_series(fin.transpose(), R, k_local, targets, horizon, tol)
    y = {int(k): 1.0}
    for t in targets:
        y[int(ids[t])] = float(stream.sums[t])
    return EigenPair(
        eigenvalue=1.0 / R, k=int(k), horizon=stream.state.n_done, y=y,
        truncation_tail_estimate=tail_rel, lemma_partial_sum=stream.diag_sum,
        restricted=restricted)


def merge_pairs(left: EigenPair, right: EigenPair) -> EigenPair:
    """Combine a left-only and right-only evaluation of the same problem."""
    if (left.k, left.eigenvalue) != (right.k, right.eigenvalue):
        raise DomainError("eigenpair halves disagree on k or eigenvalue")
    out = EigenPair(
        eigenvalue=left.eigenvalue, k=left.k,
        horizon=max(left.horizon, right.horizon),
        u=dict(left.u), y=dict(right.y),
        residual_left=left.residual_left, residual_right=right.residual_right,
        truncation_tail_estimate=max(left.truncation_tail_estimate,
                                     right.truncation_tail_estimate),
        lemma_partial_sum=left.lemma_partial_sum,
        restricted=left.restricted or right.restricted)
    return out


def _vector_residual(fin: FiniteMatrix, vec: dict[int, float], ids: np.ndarray,
                     r: float, states, right: bool) -> float:
    """sup-norm relative residual of vec as a left (or right) eigenvector.

    A state only enters the max when every neighbor feeding its image row is
    covered by the vector (in-neighbors for the left residual, out-neighbors
    for the right one); partial vectors stay checkable on their interior.
    """
    n = fin.n
    x = np.zeros(n)
    covered = np.zeros(n, dtype=bool)
    index = {int(s): i for i, s in enumerate(ids)}
    for s, v in vec.items():
        x[index[int(s)]] = v
        covered[index[int(s)]] = True
    feed = fin.csr if right else fin.transpose().csr
    image = feed @ x
    lam = 1.0 / r
    if states is None:
        check = np.flatnonzero(covered)
    else:
        check = np.array([index[int(s)] for s in states], dtype=np.int64)
    worst = 0.0
    for j in check:
        cols = feed.indices[feed.indptr[j]:feed.indptr[j + 1]]
        if not covered[cols].all():
            continue
        denom = abs(lam * x[j])
        if denom == 0.0:
            continue
        worst = max(worst, abs(image[j] - lam * x[j]) / denom)
    return worst


def residuals(src: MatrixSource, pair: EigenPair, R: float, states=None,
              radius: int | None = None) -> tuple[float, float]:
    """Fill and return (residual_left, residual_right) of the pair.

    residual_left = max_j |(uA)_j - u_j/R| / (u_j/R) over the checked states;
    right side analogous with Ay. On lazy sources the residual is taken
    against the ball truncation the series was computed on (one-step
    neighborhoods of interior states are exact there), and the pair keeps
    its restricted flag to say so.
    """
    fin, _, ids, restricted = _prepare(src, pair.k, radius)
    if pair.u:
        pair.residual_left = _vector_residual(fin, pair.u, ids, R, states, right=False)
    if pair.y:
        pair.residual_right = _vector_residual(fin, pair.y, ids, R, states, right=True)
    pair.restricted = pair.restricted or restricted
    return pair.residual_left, pair.residual_right


@dataclass
class TotalMass:
    value: float
    tail_estimate: float
    diverged: bool
    horizon: int
    restricted: bool = False

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "tail_estimate": self.tail_estimate,
            "diverged": self.diverged,
            "horizon": self.horizon,
            "restricted": self.restricted,
        }


def total_mass(src: MatrixSource, R: float, k: int = 0,
               horizon: int = DEFAULT_HORIZON_CAP, tol: float = 1e-8,
               radius: int | None = None) -> TotalMass:
    """sum_i u_i = 1 + sum_n (off-k mass of the n-th series term).

    For a stochastic matrix at R = 1 this is the mean return time to k. The
    sum need not be finite (null-recurrent chains); divergence is flagged
    when the per-step mass shows no usable geometric decay by the horizon.
    """
    fin, k_local, _, restricted = _prepare(src, k, radius)
    d = graph_period(fin, root=k_local)
    stream = TabooStream(fin, R, k_local, k_local)
    chunk = 256
    tail = math.inf
    usable = False
    while stream.state.status == "running" and stream.state.n_done < horizon:
        stream.advance(min(chunk, horizon - stream.state.n_done))
        chunk = min(2 * chunk, 1 << 16)
        _, _, tot_w = stream.window(frac=0.1)
        mass_so_far = 1.0 + float(stream.sums.sum() - stream.sums[k_local])
        tail, _, usable = stride_tail(tot_w, d)
        if usable and tail <= tol * mass_so_far:
            break
    stream.raise_on_overflow()
    value = 1.0 + float(stream.sums.sum() - stream.sums[k_local])
    if stream.state.status == "died":
        return TotalMass(value, 0.0, False, stream.state.n_done, restricted)
    return TotalMass(value, tail, not usable, stream.state.n_done, restricted)
