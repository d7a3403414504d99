import math

import numpy as np
import pytest

from perron_chain import (
    AllTruncated,
    DomainError,
    FiniteMatrix,
    McConfig,
    build_kernel,
    build_sampler,
    convergence_parameter_finite,
    estimate_left,
    estimate_right,
    estimate_total_mass,
    left_vector_series,
    right_vector_series,
    sample_excursion,
    srw_line,
    total_mass,
)


def test_mcconfig_validation():
    with pytest.raises(DomainError):
        McConfig(n_excursions=0)
    with pytest.raises(DomainError):
        McConfig(n_excursions=100, batches=7)  # 7 does not divide 100
    with pytest.raises(DomainError):
        McConfig(horizon_cap=0)
    with pytest.raises(DomainError):
        McConfig(threads=0)


def test_two_cycle_has_zero_variance():
    # 0 -> 1 -> 0 deterministically; every excursion carries weight R*f0 = 1
    a = FiniteMatrix([[0.0, 2.0], [2.0, 0.0]])
    kern = build_kernel(a)
    cfg = McConfig(n_excursions=640, batches=32, horizon_cap=100)
    est = estimate_left(kern, 0.5, cfg)
    assert est.estimate == {0: 1.0, 1: 1.0}
    assert est.se[1] == 0.0
    assert est.return_weight == 1.0
    assert est.return_weight_se == 0.0
    assert est.n_completed == 640
    assert est.n_truncated == 0
    assert est.overflow_count == 0


def test_runs_are_reproducible():
    a = FiniteMatrix([[1.0, 2.0], [3.0, 1.0]])
    kern = build_kernel(a)
    R = convergence_parameter_finite(a, tol=1e-12).R
    cfg = McConfig(seed=1234, n_excursions=4000, batches=8, horizon_cap=1000)
    e1 = estimate_left(kern, R, cfg)
    e2 = estimate_left(kern, R, cfg)
    assert e1.estimate == e2.estimate
    assert e1.se == e2.se
    assert e1.return_weight == e2.return_weight
    e3 = estimate_left(kern, R, McConfig(seed=1235, n_excursions=4000,
                                         batches=8, horizon_cap=1000))
    assert e3.estimate != e1.estimate


def test_batch_layout_does_not_change_the_draws():
    # the RNG is counter-based per (batch, excursion): threading is a
    # scheduling detail and must not move a single sample
    a = FiniteMatrix([[1.0, 2.0], [3.0, 1.0]])
    kern = build_kernel(a)
    R = convergence_parameter_finite(a, tol=1e-12).R
    one = estimate_left(kern, R, McConfig(n_excursions=2000, batches=4,
                                          horizon_cap=500, threads=1))
    two = estimate_left(kern, R, McConfig(n_excursions=2000, batches=4,
                                          horizon_cap=500, threads=4))
    assert one.estimate == two.estimate
    assert one.se == two.se


def test_sample_excursion_replays_the_kernel_stream():
    a = FiniteMatrix([[1.0, 2.0], [3.0, 1.0]])
    kern = build_kernel(a)
    R = convergence_parameter_finite(a, tol=1e-12).R
    cfg = McConfig(seed=99, n_excursions=8, batches=1, horizon_cap=200)
    est = estimate_left(kern, R, cfg)
    acc = {0: 0.0, 1: 0.0}
    completed = 0
    for e in range(8):
        exc = sample_excursion(kern, R, cfg, b=0, e=e)
        completed += exc.completed
        for s, v in exc.acc.items():
            acc[s] += v
    assert completed == est.n_completed
    # at k both routes add integer visit marks, so the match is exact; off k
    # the batch kernel adds step weights straight into one accumulator while
    # the replay subtotals per excursion, which differs by round-off only
    assert est.estimate[0] == acc[0] / 8
    assert math.isclose(est.estimate[1], acc[1] / 8, rel_tol=1e-13)
    # a single-excursion run leaves no ordering freedom at all
    solo = McConfig(seed=99, n_excursions=1, batches=1, horizon_cap=200)
    est1 = estimate_left(kern, R, solo)
    exc0 = sample_excursion(kern, R, solo, b=0, e=0)
    assert est1.estimate == {s: v for s, v in exc0.acc.items()}


def test_left_estimate_agrees_with_the_series():
    a = FiniteMatrix([[1.0, 2.0], [3.0, 1.0]])
    src = FiniteMatrix(a.dense())
    kern = build_kernel(src)
    R = convergence_parameter_finite(src, tol=1e-12).R
    u = left_vector_series(src, R, tol=1e-11).u
    cfg = McConfig(n_excursions=64000, batches=32, horizon_cap=10**4)
    est = estimate_left(kern, R, cfg)
    assert est.estimate[0] == 1.0  # exact: the n = 0 term is deterministic
    assert abs(est.estimate[1] - u[1]) <= 3.0 * est.se[1] + 1e-9
    assert abs(est.return_weight - 1.0) <= 3.0 * est.return_weight_se + 1e-9
    assert est.visits[1] > 0


def test_right_estimate_agrees_with_the_series():
    a = FiniteMatrix([[1.0, 2.0], [3.0, 1.0]])
    kern = build_kernel(a)
    R = convergence_parameter_finite(a, tol=1e-12).R
    y = right_vector_series(a, R, tol=1e-11).y
    cfg = McConfig(n_excursions=64000, batches=32, horizon_cap=10**4)
    est = estimate_right(kern, R, cfg, starts=[1])
    assert abs(est.estimate[1] - y[1]) <= 3.0 * est.se[1] + 1e-9
    # appending another start must not disturb the first one's stream
    both = estimate_right(kern, R, McConfig(n_excursions=4000, batches=8,
                                            horizon_cap=10**4), starts=[1, 0])
    solo = estimate_right(kern, R, McConfig(n_excursions=4000, batches=8,
                                            horizon_cap=10**4), starts=[1])
    assert both.estimate[1] == solo.estimate[1]


def test_total_mass_estimate_agrees_with_the_series():
    a = FiniteMatrix([[1.0, 2.0], [3.0, 1.0]])
    kern = build_kernel(a)
    R = convergence_parameter_finite(a, tol=1e-12).R
    ref = total_mass(a, R, tol=1e-11).value
    cfg = McConfig(n_excursions=64000, batches=32, horizon_cap=10**4)
    got = estimate_total_mass(kern, R, cfg)
    assert abs(got.value - ref) <= 3.0 * got.se + 1e-9


def test_all_truncated():
    # state 1 only feeds itself, so no excursion ever returns to 0
    a = FiniteMatrix([[0.0, 1.0], [0.0, 1.0]])
    kern = build_kernel(a)
    with pytest.raises(AllTruncated):
        estimate_left(kern, 0.9, McConfig(n_excursions=32, batches=1,
                                          horizon_cap=16))


def test_horizon_cap_boundary():
    # a 3-cycle needs exactly 3 steps to come home
    a = FiniteMatrix([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    kern = build_kernel(a)
    with pytest.raises(AllTruncated):
        estimate_left(kern, 1.0, McConfig(n_excursions=16, batches=1,
                                          horizon_cap=2))
    est = estimate_left(kern, 1.0, McConfig(n_excursions=16, batches=1,
                                            horizon_cap=3))
    assert est.n_completed == 16
    assert est.estimate == {0: 1.0, 1: 1.0, 2: 1.0}


def test_sampler_table_kinds():
    rng = np.random.default_rng(2)
    dense = FiniteMatrix(rng.uniform(0.1, 1.0, size=(10, 10)))
    smp = build_sampler(build_kernel(dense), 0, 100)
    assert (smp.kind == 1).all() or (smp.kind == smp.kind[0]).all()
    assert smp.n == 10
    two = FiniteMatrix([[0.0, 2.0], [2.0, 0.0]])
    smp2 = build_sampler(build_kernel(two), 0, 100)
    assert smp2.length.tolist() == [1, 1]


def test_lazy_walk_excursions():
    model = srw_line(0.3)
    kern = build_kernel(model.source)
    R = model.meta["R_ref"]
    cfg = McConfig(n_excursions=3200, batches=32, horizon_cap=2000)
    est = estimate_left(kern, R, cfg)
    assert not est.restricted  # default ball radius equals the cap: exact
    # drift pulls the walk left and some excursions never come back
    assert est.n_truncated > 0
    assert est.n_completed + est.n_truncated == 3200
    assert est.estimate[-1] > est.estimate[1]
    # truncation loses a little return weight, never gains any
    assert 0.9 < est.return_weight < 1.0 + 3.0 * est.return_weight_se


def test_estimate_right_validates_starts():
    a = FiniteMatrix([[1.0, 2.0], [3.0, 1.0]])
    kern = build_kernel(a)
    with pytest.raises(DomainError):
        estimate_right(kern, 0.2, McConfig(n_excursions=8, batches=1), starts=[])
    with pytest.raises(DomainError):
        estimate_right(kern, 0.2, McConfig(n_excursions=8, batches=1), starts=[5])


def test_truncated_excursion_reports_no_return_weight():
    a = FiniteMatrix([[0.0, 1.0], [0.0, 1.0]])
    kern = build_kernel(a)
    exc = sample_excursion(kern, 0.9, McConfig(n_excursions=8, batches=1,
                                               horizon_cap=16))
    assert not exc.completed
    assert exc.return_weight is None
    assert exc.steps == 16
