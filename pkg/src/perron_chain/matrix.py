"""Matrix sources and structural operations.

Two source flavors share one row interface: finite matrices held as CSR, and
lazily generated infinite matrices whose rows are produced on demand and
cached. Everything downstream (convergence parameter, series evaluation,
sampling) consumes rows through these types, so infinite models and explicit
matrices take identical code paths once a finite window is materialized.

States are plain ints. Finite sources use 0..n-1; lazy sources may use any
ints (the line walk uses negative states).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .errors import (
    DomainError,
    HorizonOverflow,
    NegativeOffDiagonal,
    NonFiniteRowSum,
    NonPositiveScale,
    StateBudgetExhausted,
)

DEFAULT_STATE_BUDGET = 10**6
DEFAULT_ROW_BUDGET = 10**5

# Values beyond this are treated as having left the representable range;
# leaves headroom so one more multiply cannot reach inf.
_OVERFLOW_LIMIT = 1e300


def _as_row_arrays(entries: Iterable[tuple[int, float]], *, state: int,
                   allow_negative_diagonal: bool, row_budget: int) -> tuple[np.ndarray, np.ndarray]:
    cols: list[int] = []
    vals: list[float] = []
    for j, v in entries:
        if len(cols) >= row_budget:
            raise NonFiniteRowSum(f"row {state} exceeded the {row_budget}-term budget")
        v = float(v)
        if not math.isfinite(v):
            raise NonFiniteRowSum(f"row {state} has a non-finite entry at column {j}")
        if v == 0.0:
            continue
        if v < 0.0 and not (allow_negative_diagonal and j == state):
            raise NegativeOffDiagonal(f"entry ({state}, {j}) = {v} is negative")
        cols.append(int(j))
        vals.append(v)
    return np.asarray(cols, dtype=np.int64), np.asarray(vals, dtype=np.float64)


class FiniteMatrix:
    """Explicit non-negative n x n matrix stored as CSR."""

    kind = "finite-explicit"

    def __init__(self, a, *, assume_irreducible: bool = False):
        a = sp.csr_matrix(a, dtype=np.float64)
        if a.shape[0] != a.shape[1]:
            raise DomainError(f"matrix must be square, got {a.shape}")
        a.eliminate_zeros()
        a.sort_indices()
        if a.nnz and a.data.min() < 0.0:
            i, j = self._first_negative(a)
            raise NegativeOffDiagonal(f"entry ({i}, {j}) = {a[i, j]} is negative")
        if a.nnz and not np.isfinite(a.data).all():
            raise NonFiniteRowSum("matrix has non-finite entries")
        self.csr = a
        self.n = a.shape[0]
        self.assume_irreducible = assume_irreducible
        self._transpose: FiniteMatrix | None = None

    @staticmethod
    def _first_negative(a: sp.csr_matrix) -> tuple[int, int]:
        coo = a.tocoo()
        idx = int(np.argmax(coo.data < 0))
        return int(coo.row[idx]), int(coo.col[idx])

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.csr.indptr[i], self.csr.indptr[i + 1]
        return self.csr.indices[lo:hi].astype(np.int64), self.csr.data[lo:hi]

    def states(self) -> range:
        return range(self.n)

    def dense(self) -> np.ndarray:
        return self.csr.toarray()

    def transpose(self) -> FiniteMatrix:
        if self._transpose is None:
            self._transpose = FiniteMatrix(self.csr.T.tocsr(),
                                           assume_irreducible=self.assume_irreducible)
        return self._transpose


class LazyMatrix:
    """Lazily generated non-negative matrix over int states.

    ``row_fn(i)`` returns an iterable of ``(j, value)`` pairs. Rows are
    validated and cached on first touch; the cache refuses to grow past
    ``state_budget`` distinct rows. Cache fill is idempotent, so concurrent
    readers at worst duplicate work.
    """

    kind = "infinite-lazy"
    n = None

    def __init__(self, row_fn: Callable[[int], Iterable[tuple[int, float]]], *,
                 state_budget: int = DEFAULT_STATE_BUDGET,
                 row_budget: int = DEFAULT_ROW_BUDGET,
                 assume_irreducible: bool = True):
        self.row_fn = row_fn
        self.state_budget = state_budget
        self.row_budget = row_budget
        self.assume_irreducible = assume_irreducible
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        hit = self._cache.get(i)
        if hit is not None:
            return hit
        if len(self._cache) >= self.state_budget:
            raise StateBudgetExhausted(
                f"lazy source already materialized {len(self._cache)} rows")
        cols, vals = _as_row_arrays(self.row_fn(i), state=i,
                                    allow_negative_diagonal=False,
                                    row_budget=self.row_budget)
        self._cache[i] = (cols, vals)
        return cols, vals

    def touched(self) -> list[int]:
        return list(self._cache)


MatrixSource = FiniteMatrix | LazyMatrix


class FiniteMetzler:
    """Explicit Metzler matrix: off-diagonal entries positive, diagonal any sign."""

    kind = "finite-explicit"

    def __init__(self, g, *, assume_irreducible: bool = False):
        g = np.asarray(g, dtype=np.float64)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise DomainError(f"matrix must be square, got {g.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteRowSum("matrix has non-finite entries")
        off = g.copy()
        np.fill_diagonal(off, 0.0)
        if (off < 0.0).any():
            i, j = np.argwhere(off < 0.0)[0]
            raise NegativeOffDiagonal(f"off-diagonal entry ({i}, {j}) = {g[i, j]} is negative")
        self.g = g
        self.n = g.shape[0]
        self.diag = np.diag(g).copy()
        self.assume_irreducible = assume_irreducible

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        r = self.g[i]
        cols = np.flatnonzero(r != 0.0)
        if r[i] == 0.0:
            cols = np.union1d(cols, [i])
        return cols.astype(np.int64), r[cols]

    def states(self) -> range:
        return range(self.n)

    def d(self) -> np.ndarray:
        """Full row sums, diagonal included."""
        return self.g.sum(axis=1)

    def q(self) -> np.ndarray:
        """Off-diagonal row sums (total jump rates)."""
        return self.d() - self.diag


class LazyMetzler:
    """Lazily generated Metzler matrix with a declared diagonal bound.

    ``diag_bound`` must dominate sup |g_ii|; it feeds the admissible-shift
    computation for infinite sources, which needs the diagonal bounded from
    both sides.
    """

    kind = "infinite-lazy"
    n = None

    def __init__(self, row_fn: Callable[[int], Iterable[tuple[int, float]]], *,
                 diag_bound: float,
                 state_budget: int = DEFAULT_STATE_BUDGET,
                 row_budget: int = DEFAULT_ROW_BUDGET,
                 assume_irreducible: bool = True):
        self.row_fn = row_fn
        self.diag_bound = float(diag_bound)
        self.state_budget = state_budget
        self.row_budget = row_budget
        self.assume_irreducible = assume_irreducible
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        hit = self._cache.get(i)
        if hit is not None:
            return hit
        if len(self._cache) >= self.state_budget:
            raise StateBudgetExhausted(
                f"lazy source already materialized {len(self._cache)} rows")
        cols, vals = _as_row_arrays(self.row_fn(i), state=i,
                                    allow_negative_diagonal=True,
                                    row_budget=self.row_budget)
        if cols.size and (i == cols).any():
            dii = float(vals[cols == i][0])
            if abs(dii) > self.diag_bound + 1e-12:
                raise DomainError(
                    f"diagonal entry g[{i},{i}] = {dii} exceeds the declared bound {self.diag_bound}")
        self._cache[i] = (cols, vals)
        return cols, vals


MetzlerSource = FiniteMetzler | LazyMetzler


# -----------------------------------------------------------------------------
# row sums and kernels
# -----------------------------------------------------------------------------

def row_sums(src, states: Sequence[int] | None = None):
    """Row sums f_i = sum_j a_ij.

    Finite sources return the full vector as an ndarray; lazy sources return a
    dict over the requested states. Raises NonFiniteRowSum when a sum is not
    finite.
    """
    if isinstance(src, FiniteMatrix):
        f = np.asarray(src.csr.sum(axis=1)).ravel()
        if not np.isfinite(f).all():
            raise NonFiniteRowSum("a row sum is not finite")
        return f
    if states is None:
        raise DomainError("lazy sources need an explicit state list for row sums")
    out: dict[int, float] = {}
    for i in states:
        _, vals = src.row(i)
        s = float(vals.sum())
        if not math.isfinite(s):
            raise NonFiniteRowSum(f"row sum at state {i} is not finite")
        out[i] = s
    return out


@dataclass
class TransitionKernel:
    """Row-normalized kernel m_ij = a_ij / f_i over a matrix source.

    Rows with f_i = 0 are rejected: the chain must be able to leave every
    state for excursions to regenerate.
    """

    source: object
    _f: dict[int, float] = field(default_factory=dict)

    def f(self, i: int) -> float:
        got = self._f.get(i)
        if got is None:
            _, vals = self.source.row(i)
            got = float(vals.sum())
            if not math.isfinite(got):
                raise NonFiniteRowSum(f"row sum at state {i} is not finite")
            if got <= 0.0:
                raise DomainError(f"state {i} has zero row sum; kernel undefined")
            self._f[i] = got
        return got

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        cols, vals = self.source.row(i)
        return cols, vals / self.f(i)


def build_kernel(src) -> TransitionKernel:
    """Build the embedded transition kernel of a non-negative source."""
    if isinstance(src, (FiniteMetzler, LazyMetzler)):
        raise DomainError("kernels are built from non-negative sources, not Metzler ones")
    kern = TransitionKernel(src)
    if isinstance(src, FiniteMatrix):
        f = row_sums(src)
        if (f <= 0.0).any():
            raise DomainError(f"state {int(np.argmin(f > 0))} has zero row sum; kernel undefined")
        kern._f = {i: float(f[i]) for i in range(src.n)}
    return kern


# -----------------------------------------------------------------------------
# irreducibility
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class IrreducibilityReport:
    irreducible: bool
    exact: bool              # False when the verdict is ball-restricted
    witness: tuple[int, int] | None = None
    n_explored: int = 0
    radius: int | None = None

    def describe(self) -> str:
        scope = "" if self.exact else f" within the explored ball (radius {self.radius})"
        if self.irreducible:
            return f"irreducible{scope}"
        return f"not irreducible{scope}; no path {self.witness[0]} -> {self.witness[1]}"


def _scc_verdict(a: sp.csr_matrix, labels_of: Sequence[int]) -> tuple[bool, tuple[int, int] | None]:
    ncomp, labels = csgraph.connected_components(a, directed=True, connection="strong")
    if ncomp == 1:
        return True, None
    # pick a witness pair (i, j) with no path i -> j: condensation is a DAG,
    # so any two states in different components give one direction or the other
    first = {}
    for idx, lab in enumerate(labels):
        first.setdefault(int(lab), idx)
    comps = sorted(first)
    i, j = first[comps[0]], first[comps[1]]
    n = a.shape[0]
    reach = csgraph.breadth_first_order(a, i, directed=True, return_predecessors=False)
    if j in set(int(x) for x in reach):
        i, j = j, i
    return False, (labels_of[i], labels_of[j])


def is_irreducible(src, *, root: int = 0, radius: int | None = None) -> IrreducibilityReport:
    """Exact SCC check on finite sources; ball-restricted verdict on lazy ones.

    For a lazy source the out-neighborhood ball around ``root`` is
    materialized (up to ``radius`` steps) and strong connectivity is checked
    on that finite restriction, so the verdict is explicitly qualified:
    paths through states outside the ball are invisible.
    """
    if isinstance(src, FiniteMatrix):
        ok, witness = _scc_verdict(src.csr, list(range(src.n)))
        return IrreducibilityReport(ok, True, witness, src.n, None)
    if isinstance(src, FiniteMetzler):
        off = src.g.copy()
        np.fill_diagonal(off, 0.0)
        ok, witness = _scc_verdict(sp.csr_matrix(off), list(range(src.n)))
        return IrreducibilityReport(ok, True, witness, src.n, None)
    if radius is None:
        radius = 16
    sub, ids = ball_restriction(src, root, radius)
    if isinstance(sub, FiniteMetzler):
        off = sub.g.copy()
        np.fill_diagonal(off, 0.0)
        ok, witness = _scc_verdict(sp.csr_matrix(off), ids)
    else:
        ok, witness = _scc_verdict(sub.csr, ids)
    return IrreducibilityReport(ok, False, witness, len(ids), radius)


# -----------------------------------------------------------------------------
# ball restriction (lazy -> finite window)
# -----------------------------------------------------------------------------

def ball_restriction(src, root: int, radius: int, *,
                     max_states: int | None = None):
    """Materialize the out-BFS ball of ``radius`` around ``root``.

    Returns ``(restricted, ids)`` where ``ids[local] = global state`` and
    ``restricted`` is a FiniteMatrix (or FiniteMetzler) over local indices.
    Edges leaving the ball are dropped, i.e. the restriction is the principal
    submatrix on the ball.
    """
    budget = max_states if max_states is not None else getattr(src, "state_budget", DEFAULT_STATE_BUDGET)
    order = [root]
    index = {root: 0}
    frontier = [root]
    for _ in range(radius):
        nxt: list[int] = []
        for i in frontier:
            cols, _ = src.row(i)
            for j in cols:
                j = int(j)
                if j not in index:
                    if len(order) >= budget:
                        raise StateBudgetExhausted(
                            f"ball around {root} exceeded the {budget}-state budget")
                    index[j] = len(order)
                    order.append(j)
                    nxt.append(j)
        if not nxt:
            break
        frontier = nxt

    n = len(order)
    metzler = isinstance(src, (FiniteMetzler, LazyMetzler))
    if metzler:
        g = np.zeros((n, n))
        for li, i in enumerate(order):
            cols, vals = src.row(i)
            for j, v in zip(cols, vals):
                lj = index.get(int(j))
                if lj is not None:
                    g[li, lj] = v
        return FiniteMetzler(g, assume_irreducible=False), np.asarray(order, dtype=np.int64)

    rows_i: list[int] = []
    rows_j: list[int] = []
    rows_v: list[float] = []
    for li, i in enumerate(order):
        cols, vals = src.row(i)
        for j, v in zip(cols, vals):
            lj = index.get(int(j))
            if lj is not None:
                rows_i.append(li)
                rows_j.append(lj)
                rows_v.append(float(v))
    a = sp.csr_matrix((rows_v, (rows_i, rows_j)), shape=(n, n))
    return FiniteMatrix(a), np.asarray(order, dtype=np.int64)


# -----------------------------------------------------------------------------
# column scaling
# -----------------------------------------------------------------------------

def _alpha_lookup(alpha) -> Callable[[int], float]:
    if callable(alpha):
        return alpha
    if isinstance(alpha, Mapping):
        return lambda j: alpha[j]
    arr = np.asarray(alpha, dtype=np.float64)
    return lambda j: float(arr[j])


def scale_columns(src, alpha):
    """Column rescaling a_ij -> a_ij * alpha_j with alpha_j > 0.

    The scaled source shares the Perron structure of the original: its left
    vector picks up a 1/alpha factor and its convergence parameter moves with
    the spectral radius of the scaled matrix. Raises NonPositiveScale on any
    touched alpha_j <= 0.
    """
    look = _alpha_lookup(alpha)
    if isinstance(src, FiniteMatrix):
        a = np.array([look(j) for j in range(src.n)], dtype=np.float64)
        if (a <= 0.0).any() or not np.isfinite(a).all():
            j = int(np.argmin((a > 0.0) & np.isfinite(a)))
            raise NonPositiveScale(f"alpha[{j}] = {a[j]} is not a positive real")
        return FiniteMatrix(src.csr @ sp.diags(a), assume_irreducible=src.assume_irreducible)

    def scaled_row(i: int, _src=src, _look=look):
        cols, vals = _src.row(i)
        out = []
        for j, v in zip(cols, vals):
            aj = float(_look(int(j)))
            if not (aj > 0.0 and math.isfinite(aj)):
                raise NonPositiveScale(f"alpha[{int(j)}] = {aj} is not a positive real")
            out.append((int(j), v * aj))
        return out

    return LazyMatrix(scaled_row, state_budget=src.state_budget,
                      row_budget=src.row_budget,
                      assume_irreducible=src.assume_irreducible)


# -----------------------------------------------------------------------------
# taboo powers
# -----------------------------------------------------------------------------

@dataclass
class TabooPowerTable:
    """Powers restricted to paths avoiding the taboo state at intermediate steps.

    ``value(n, j)`` is the weight of all length-n paths origin -> j whose
    states at steps 1..n-1 all differ from ``taboo``. Endpoints are free: the
    origin may equal the taboo state and paths may terminate on it.
    """

    origin: int
    taboo: int
    horizon: int
    rows: list[dict[int, float]]   # rows[n-1] maps j -> value at length n

    def value(self, n: int, j: int) -> float:
        if not 1 <= n <= self.horizon:
            raise DomainError(f"n = {n} outside computed horizon 1..{self.horizon}")
        return self.rows[n - 1].get(j, 0.0)


def taboo_powers(src, origin: int, taboo: int, n_max: int) -> TabooPowerTable:
    """Exact taboo-power table up to length ``n_max``.

    Computed by sparse vector-matrix products; the taboo coordinate of the
    carried vector is zeroed before each multiplication (intermediate states
    avoid the taboo, the final state does not). Values can grow like the
    spectral radius to the n-th power, so intermediate overflow raises
    HorizonOverflow; weighted series evaluation avoids this by folding the
    weight in per step.
    """
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    cols, vals = src.row(origin)
    cur = {int(j): float(v) for j, v in zip(cols, vals)}
    rows = [dict(cur)]
    for _ in range(1, n_max):
        nxt: dict[int, float] = {}
        for l, w in cur.items():
            if l == taboo or w == 0.0:
                continue
            ccols, cvals = src.row(l)
            for j, v in zip(ccols, cvals):
                j = int(j)
                nxt[j] = nxt.get(j, 0.0) + w * float(v)
        for v in nxt.values():
            if abs(v) > _OVERFLOW_LIMIT or not math.isfinite(v):
                raise HorizonOverflow(
                    "taboo powers left the floating-point range; "
                    "use weighted series evaluation instead")
        rows.append(dict(nxt))
        cur = nxt
        if not cur:
            # masked vector died out; all further rows are zero
            while len(rows) < n_max:
                rows.append({})
            break
    return TabooPowerTable(origin, taboo, n_max, rows)


# -----------------------------------------------------------------------------
# Q-matrix of a Metzler source
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class QMatrixRow:
    cols: np.ndarray
    vals: np.ndarray


class QMatrix:
    """Conservative generator q_ij = g_ij - d_i on the diagonal, d_i = row sum."""

    def __init__(self, src: MetzlerSource):
        self.source = src
        self._d: dict[int, float] = {}

    def d(self, i: int) -> float:
        got = self._d.get(i)
        if got is None:
            _, vals = self.source.row(i)
            got = float(vals.sum())
            if not math.isfinite(got):
                raise NonFiniteRowSum(f"row sum at state {i} is not finite")
            self._d[i] = got
        return got

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        cols, vals = self.source.row(i)
        d = self.d(i)
        cols = cols.copy()
        vals = vals.copy()
        if (cols == i).any():
            vals[cols == i] -= d
        else:
            cols = np.append(cols, i)
            vals = np.append(vals, -d)
        return cols, vals

    def dense(self) -> np.ndarray:
        if not isinstance(self.source, FiniteMetzler):
            raise DomainError("dense Q-matrix needs a finite source")
        g = self.source.g
        return g - np.diag(g.sum(axis=1))


def build_qmatrix(src: MetzlerSource) -> tuple[QMatrix, Callable[[int], float]]:
    """Q-matrix of a Metzler source together with its row-sum map d."""
    q = QMatrix(src)
    return q, q.d
