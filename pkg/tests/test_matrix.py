import numpy as np
import pytest

from perron_chain import (
    DomainError,
    FiniteMatrix,
    FiniteMetzler,
    HorizonOverflow,
    LazyMatrix,
    LazyMetzler,
    NegativeOffDiagonal,
    NonFiniteRowSum,
    NonPositiveScale,
    QMatrix,
    StateBudgetExhausted,
    ball_restriction,
    build_kernel,
    build_qmatrix,
    is_irreducible,
    row_sums,
    scale_columns,
    taboo_powers,
)


def test_finite_matrix_basics():
    a = FiniteMatrix([[0.0, 2.0], [3.0, 1.0]])
    assert a.n == 2
    cols, vals = a.row(0)
    assert cols.tolist() == [1]
    assert vals.tolist() == [2.0]
    assert a.dense().tolist() == [[0.0, 2.0], [3.0, 1.0]]
    at = a.transpose()
    assert at.dense().tolist() == [[0.0, 3.0], [2.0, 1.0]]
    # transpose is cached
    assert a.transpose() is at


def test_finite_matrix_rejects_bad_input():
    with pytest.raises(DomainError):
        FiniteMatrix([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    with pytest.raises(NegativeOffDiagonal):
        FiniteMatrix([[0.0, -1.0], [1.0, 0.0]])
    with pytest.raises(NonFiniteRowSum):
        FiniteMatrix([[0.0, np.inf], [1.0, 0.0]])
    with pytest.raises(NonFiniteRowSum):
        FiniteMatrix([[0.0, np.nan], [1.0, 0.0]])


def test_finite_matrix_drops_explicit_zeros():
    a = FiniteMatrix([[0.0, 1.0], [1.0, 0.0]])
    assert a.csr.nnz == 2


def test_lazy_matrix_caches_and_validates():
    calls = []

    def row(i):
        calls.append(i)
        return [(i + 1, 2.0), (i - 1, 1.0)]

    src = LazyMatrix(row)
    c1, v1 = src.row(5)
    c2, _ = src.row(5)
    assert calls == [5]
    assert set(c1.tolist()) == {4, 6}
    assert (c1 == c2).all()
    assert sorted(src.touched()) == [5]


def test_lazy_matrix_budget():
    src = LazyMatrix(lambda i: [(i + 1, 1.0)], state_budget=3)
    src.row(0), src.row(1), src.row(2)
    with pytest.raises(StateBudgetExhausted):
        src.row(3)


def test_lazy_matrix_rejects_negative_entries():
    src = LazyMatrix(lambda i: [(i + 1, -1.0)])
    with pytest.raises(NegativeOffDiagonal):
        src.row(0)


def test_finite_metzler_diagonal_may_be_negative():
    g = FiniteMetzler([[-2.0, 1.0], [1.0, -2.0]])
    assert g.diag.tolist() == [-2.0, -2.0]
    assert g.d().tolist() == [-1.0, -1.0]
    assert g.q().tolist() == [1.0, 1.0]
    # row always reports the diagonal column, even a zero one
    g2 = FiniteMetzler([[0.0, 1.0], [4.0, 0.0]])
    cols, vals = g2.row(0)
    assert cols.tolist() == [0, 1]
    assert vals.tolist() == [0.0, 1.0]
    with pytest.raises(NegativeOffDiagonal):
        FiniteMetzler([[-1.0, -0.5], [1.0, -1.0]])


def test_lazy_metzler_diag_bound_is_two_sided():
    src = LazyMetzler(lambda i: [(i, -5.0), (i + 1, 1.0)], diag_bound=2.0)
    with pytest.raises(DomainError):
        src.row(0)
    ok = LazyMetzler(lambda i: [(i, -5.0), (i + 1, 1.0)], diag_bound=5.0)
    cols, vals = ok.row(0)
    assert dict(zip(cols.tolist(), vals.tolist())) == {0: -5.0, 1: 1.0}


def test_row_sums():
    a = FiniteMatrix([[0.0, 2.0], [3.0, 1.0]])
    assert row_sums(a).tolist() == [2.0, 4.0]
    lazy = LazyMatrix(lambda i: [(i + 1, 0.3), (i - 1, 0.7)])
    assert row_sums(lazy, states=[0, 4]) == {0: 1.0, 4: 1.0}
    with pytest.raises(DomainError):
        row_sums(lazy)


def test_kernel_normalizes_rows():
    a = FiniteMatrix([[0.0, 2.0], [3.0, 1.0]])
    kern = build_kernel(a)
    assert kern.f(0) == 2.0
    assert kern.f(1) == 4.0
    cols, p = kern.row(1)
    assert cols.tolist() == [0, 1]
    assert p.tolist() == [0.75, 0.25]


def test_kernel_rejects_dead_rows_and_metzler():
    with pytest.raises(DomainError):
        build_kernel(FiniteMatrix([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(DomainError):
        build_kernel(FiniteMetzler([[-1.0, 1.0], [1.0, -1.0]]))


def test_is_irreducible():
    rep = is_irreducible(FiniteMatrix([[0.0, 1.0], [1.0, 0.0]]))
    assert rep.irreducible and rep.exact
    rep = is_irreducible(FiniteMatrix([[1.0, 1.0], [0.0, 1.0]]))
    assert not rep.irreducible
    # the witness pair really has no path i -> j (here: nothing reaches 0)
    assert rep.witness == (1, 0)
    # Metzler irreducibility ignores the diagonal sign
    rep = is_irreducible(FiniteMetzler([[-2.0, 1.0], [1.0, -2.0]]))
    assert rep.irreducible and rep.exact


def test_is_irreducible_lazy_is_qualified():
    line = LazyMatrix(lambda i: [(i - 1, 1.0), (i + 1, 1.0)])
    rep = is_irreducible(line, radius=8)
    assert rep.irreducible and not rep.exact
    assert rep.radius == 8
    assert "ball" in rep.describe()


def test_ball_restriction_on_the_line():
    line = LazyMatrix(lambda i: [(i - 1, 0.7), (i + 1, 0.3)])
    fin, ids = ball_restriction(line, 0, 3)
    assert ids[0] == 0  # root comes first
    assert sorted(ids.tolist()) == [-3, -2, -1, 0, 1, 2, 3]
    assert isinstance(fin, FiniteMatrix)
    # interior rows keep both neighbors, boundary rows lose the outward edge
    loc = {int(g): l for l, g in enumerate(ids)}
    cols, _ = fin.row(loc[3])
    assert [int(ids[c]) for c in cols] == [2]
    cols, _ = fin.row(loc[0])
    assert sorted(int(ids[c]) for c in cols) == [-1, 1]


def test_ball_restriction_metzler_and_budget():
    tri = LazyMetzler(lambda i: [(i - 1, 1.0), (i, -2.0), (i + 1, 1.0)],
                      diag_bound=2.0)
    fin, ids = ball_restriction(tri, 0, 2)
    assert isinstance(fin, FiniteMetzler)
    assert sorted(ids.tolist()) == [-2, -1, 0, 1, 2]
    assert fin.g[0, 0] == -2.0
    with pytest.raises(StateBudgetExhausted):
        ball_restriction(tri, 0, 50, max_states=10)


def test_scale_columns_finite():
    a = FiniteMatrix([[0.0, 2.0], [3.0, 1.0]])
    b = scale_columns(a, [2.0, 0.5])
    assert b.dense().tolist() == [[0.0, 1.0], [6.0, 0.5]]
    with pytest.raises(NonPositiveScale):
        scale_columns(a, [1.0, 0.0])
    with pytest.raises(NonPositiveScale):
        scale_columns(a, [1.0, -2.0])


def test_scale_columns_lazy():
    line = LazyMatrix(lambda i: [(i - 1, 1.0), (i + 1, 1.0)])
    scaled = scale_columns(line, lambda j: 2.0 if j >= 0 else 1.0)
    cols, vals = scaled.row(0)
    got = dict(zip(cols.tolist(), vals.tolist()))
    assert got == {-1: 1.0, 1: 2.0}
    bad = scale_columns(line, lambda j: -1.0)
    with pytest.raises(NonPositiveScale):
        bad.row(0)


def test_taboo_powers_two_state():
    # a = [[0,2],[2,0]] from 0 with taboo 0: the masked vector bounces once
    a = FiniteMatrix([[0.0, 2.0], [2.0, 0.0]])
    t = taboo_powers(a, origin=0, taboo=0, n_max=5)
    assert t.value(1, 1) == 2.0
    assert t.value(2, 0) == 4.0
    # after returning, every continuation was masked away
    assert t.value(3, 1) == 0.0
    assert t.value(4, 0) == 0.0
    with pytest.raises(DomainError):
        t.value(6, 0)
    with pytest.raises(DomainError):
        t.value(0, 0)


def test_taboo_powers_match_dense_replica():
    from oracles import taboo_return_terms

    rng = np.random.default_rng(7)
    a = rng.uniform(0.1, 1.0, size=(5, 5))
    src = FiniteMatrix(a)
    t = taboo_powers(src, origin=2, taboo=2, n_max=12)
    ref = taboo_return_terms(a, 1.0, 2, 12)
    got = np.array([t.value(n, 2) for n in range(1, 13)])
    assert np.allclose(got, ref, rtol=1e-13, atol=0.0)


def test_taboo_powers_overflow():
    # self loops keep mass flowing around the taboo state, so the entries
    # square up each step instead of dying out
    a = FiniteMatrix([[1e200, 1e200], [1e200, 1e200]])
    with pytest.raises(HorizonOverflow):
        taboo_powers(a, origin=0, taboo=1, n_max=8)


def test_qmatrix():
    g = FiniteMetzler([[-2.0, 1.0], [1.0, -2.0]])
    q, d = build_qmatrix(g)
    assert d(0) == -1.0
    assert q.dense().tolist() == [[-1.0, 1.0], [1.0, -1.0]]
    cols, vals = q.row(0)
    got = dict(zip(cols.tolist(), vals.tolist()))
    assert got == {0: -1.0, 1: 1.0}
    # a zero diagonal still gets the -d entry
    g2 = FiniteMetzler([[0.0, 1.0], [4.0, 0.0]])
    q2 = QMatrix(g2)
    cols, vals = q2.row(1)
    got = dict(zip(cols.tolist(), vals.tolist()))
    assert got == {0: 4.0, 1: -4.0}
