"""Drivers around the jitted CSR kernels.

``TabooStream`` runs the weighted taboo recursion on a finite matrix and
keeps just enough per-step history (a trailing window) for geometric tail
estimation. ``perron_growth`` runs power iteration tracking 1-norm growth
factors, averaging over the graph period so periodic matrices converge too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _csrops
from .errors import HorizonOverflow, NoConvergence
from .matrix import FiniteMatrix

DEFAULT_HORIZON_CAP = 2**18


def graph_period(fin: FiniteMatrix, root: int = 0) -> int:
    """Period of the positivity digraph: gcd of (level[u] + 1 - level[v]) over edges.

    Assumes the component reachable from ``root`` covers every edge of
    interest (true for irreducible matrices). Returns 1 when the gcd
    degenerates.
    """
    n = fin.n
    level = np.full(n, -1, dtype=np.int64)
    level[root] = 0
    frontier = [root]
    order = [root]
    while frontier:
        nxt = []
        for u in frontier:
            cols, _ = fin.row(u)
            for v in cols:
                v = int(v)
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
                    order.append(v)
        frontier = nxt
    g = 0
    indptr, indices = fin.csr.indptr, fin.csr.indices
    for u in order:
        lu = level[u]
        for p in range(indptr[u], indptr[u + 1]):
            v = indices[p]
            if level[v] >= 0:
                g = math.gcd(g, lu + 1 - int(level[v]))
    return max(g, 1)


def stride_tail(terms: np.ndarray, stride: int) -> tuple[float, float, bool]:
    """Geometric tail of a term sequence from its trailing window.

    ``terms`` are the most recent computed terms (oldest first). The decay
    ratio is fit per ``stride`` steps between the first and last nonzero
    entries of the window; the guard declares the fit unusable when the ratio
    sits within 1/(number of stride points) of 1, which is where polynomial
    decay lands.

    Returns (tail, ratio, usable). All-zero windows give (0, 0, True): the
    recursion has died and the series is exactly complete.
    """
    nz = np.flatnonzero(terms > 0.0)
    if nz.size == 0:
        return 0.0, 0.0, True
    if nz.size == 1:
        return math.inf, 1.0, False
    first, last = int(nz[0]), int(nz[-1])
    span = last - first
    if span < stride:
        return math.inf, 1.0, False
    n_strides = span / stride
    ratio = (terms[last] / terms[first]) ** (1.0 / n_strides)
    if not math.isfinite(ratio) or ratio >= 1.0 - 1.0 / max(n_strides, 2.0):
        return math.inf, ratio, False
    tail = terms[last] * ratio / (1.0 - ratio)
    return tail, ratio, True


@dataclass
class StreamState:
    status: str                 # 'running' | 'died' | 'overflow'
    n_done: int                 # highest term index computed


class TabooStream:
    """Streaming evaluation of sum_n r^n (origin-row taboo powers).

    Terms are held with the weight folded in per step, so convergent series
    never overflow even when raw powers would. ``sums`` accumulates per-state
    partial sums; trailing windows of the origin-coordinate terms, the
    monitored-coordinate terms and the per-step off-origin totals support
    tail estimation and recurrence classification.
    """

    def __init__(self, fin: FiniteMatrix, r: float, origin: int, taboo: int,
                 monitors: np.ndarray | None = None, *, keep: int | None = None):
        self.fin = fin
        self.r = float(r)
        self.origin = int(origin)
        self.taboo = int(taboo)
        self.monitors = (np.asarray(monitors, dtype=np.int64)
                         if monitors is not None else np.empty(0, dtype=np.int64))
        self.keep = keep
        n = fin.n
        cols, vals = fin.row(origin)
        v = np.zeros(n)
        v[cols] = vals * self.r
        self.v = v
        self.sums = v.copy()
        self._diag_chunks: list[np.ndarray] = [np.array([v[self.origin]])]
        self._mon_chunks: list[np.ndarray] = [v[self.monitors].reshape(1, -1).copy()]
        self._total_chunks: list[np.ndarray] = [np.array([v.sum() - v[self.origin]])]
        self.state = StreamState("running", 1)
        if not np.any(v):
            self.state.status = "died"
        if np.abs(v).max(initial=0.0) > _csrops.OVERFLOW_LIMIT:
            self.state.status = "overflow"

    def advance(self, steps: int) -> None:
        if self.state.status != "running" or steps <= 0:
            return
        csr = self.fin.csr
        terms = np.empty((steps, self.monitors.size))
        totals = np.empty(steps)
        diag = np.empty(steps)
        status, done = _csrops.masked_series_chunk(
            csr.indptr, csr.indices, csr.data, self.r, self.taboo, self.origin,
            self.v, self.sums, self.monitors, terms, totals, diag, steps)
        if done:
            self._diag_chunks.append(diag[:done])
            self._mon_chunks.append(terms[:done])
            self._total_chunks.append(totals[:done])
        self.state.n_done += int(done)
        if status == _csrops.STATUS_OVERFLOW:
            self.state.status = "overflow"
        elif status == _csrops.STATUS_DIED:
            self.state.status = "died"
        self._trim()

    # keep roughly the trailing `keep` indices (default: last ~12.5% but at
    # least 4096) so long runs stay in bounded memory
    def _trim(self) -> None:
        keep = self.keep
        if keep is None:
            keep = max(4096, self.state.n_done // 8)
        for chunks in (self._diag_chunks, self._mon_chunks, self._total_chunks):
            have = sum(len(c) for c in chunks)
            while len(chunks) > 1 and have - len(chunks[0]) >= keep:
                have -= len(chunks[0])
                chunks.pop(0)

    def window(self, frac: float = 0.1, least: int = 64) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Trailing-window views (diag terms, monitor terms, totals)."""
        want = max(least, int(self.state.n_done * frac))
        diag = np.concatenate(self._diag_chunks)
        mon = np.concatenate(self._mon_chunks, axis=0)
        tot = np.concatenate(self._total_chunks)
        return diag[-want:], mon[-want:], tot[-want:]

    @property
    def diag_sum(self) -> float:
        return float(self.sums[self.origin])

    def raise_on_overflow(self) -> None:
        if self.state.status == "overflow":
            raise HorizonOverflow(
                f"series terms overflowed at n = {self.state.n_done}; "
                "the weight is above the convergence parameter")


def perron_growth(fin: FiniteMatrix, *, tol: float = 1e-12, budget: int = 10**7,
                  period: int | None = None) -> tuple[float, int, bool]:
    """Spectral radius of a non-negative irreducible matrix by power iteration.

    Growth factors of the 1-norm are averaged geometrically over one graph
    period, which makes the estimate converge for periodic matrices where the
    raw factors oscillate. Accuracy of the running estimate is judged from
    the decay of its own increments; NoConvergence is raised when the budget
    runs out first.

    Returns (rho, iterations, converged).
    """
    n = fin.n
    if n == 1:
        _, vals = fin.row(0)
        return float(vals.sum()), 0, True
    d = period if period is not None else graph_period(fin)
    csr = fin.csr
    x = np.full(n, 1.0 / n)
    chunk = max(256, 8 * d)
    growth = np.empty(chunk)
    history: list[float] = []
    estimates: list[float] = []
    done = 0
    while done < budget:
        step = min(chunk, budget - done)
        status, t = _csrops.power_chunk(csr.indptr, csr.indices, csr.data, x, growth, step)
        if status == _csrops.STATUS_DIED:
            raise NoConvergence("power iteration produced a zero or non-finite image; "
                                "is the matrix irreducible?")
        done += t
        history.extend(growth[:t])
        if len(history) > 4 * d:
            del history[:-4 * d]
        if len(history) < d:
            continue
        last = np.array(history[-d:])
        est = float(np.exp(np.mean(np.log(last))))
        estimates.append(est)
        if len(estimates) >= 3:
            e1, e2, e3 = estimates[-3:]
            d1, d2 = abs(e2 - e1), abs(e3 - e2)
            if d2 == 0.0 and d1 == 0.0:
                return e3, done, True
            if d1 > 0.0 and d2 < d1:
                q = d2 / d1
                err = d2 * q / (1.0 - q)
                if err <= 0.2 * tol * e3:
                    return e3, done, True
    raise NoConvergence(f"power iteration did not reach tol = {tol} in {budget} steps")
