import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import sigma_min_exact_subsets
from sqrk.errors import QuantileConditionViolated, SamplingConditionViolated
from sqrk.linalg import row_normalize, sigma_min_rows
from sqrk.problems import GenSpec, gen_gaussian_system
from sqrk.solvers import SolverConfig, solve
from sqrk.theory import (RateParams, bound_curve, condition_rate_equiv, estimate_sigma_aqb_min,
                         estimate_sigma_from_trace, hypothesis_heatmap, rate_r, rate_rC, rate_rC_tilde,
                         rate_rG)


def params(m=10000, alpha=1.0, q=0.5, beta=0.01, smax=math.sqrt(2), sig=1.0):
    return RateParams(m, alpha, q, beta, smax, sig)


def test_rate_rG_examples():
    assert rate_rG(RateParams(200, 1.0, 0.5, 0.0, 1.0, 1.0)) == pytest.approx(0.99, abs=1e-15)
    assert rate_rG(RateParams(200, 1.0, 0.5, 0.0, 1.0, 0.0)) == 1.0
    assert rate_rG(RateParams(200, 1.0, 0.5, 0.0, 10.0, 10.0)) == pytest.approx(0.0, abs=1e-15)


def test_rate_rC_tilde_example():
    # m d = 4900, smax^2 = 2, beta m = 100: 1 + (2/10)(2/70) + 2/4900 = 1 + 15/2450
    exact = 1 + Fraction(2, 10) * Fraction(2, 70) + Fraction(2, 4900)
    assert exact == 1 + Fraction(15, 2450)
    assert rate_rC_tilde(params()) == pytest.approx(float(exact), rel=1e-14)


def test_rate_rC_single_row_example():
    exact = 1 + 2 * Fraction(2, 70) + Fraction(2, 4900)
    assert exact == 1 + Fraction(141, 2450)
    assert rate_rC(params(), 1) == pytest.approx(float(exact), rel=1e-14)


def test_rate_rC_substitution_and_monotone():
    p = params()
    assert rate_rC(p, 100) == rate_rC_tilde(p)
    vals = [rate_rC(p, s) for s in range(1, 200)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert min(vals) >= 1.0


def test_quantile_condition_errors():
    with pytest.raises(QuantileConditionViolated):
        rate_rC_tilde(params(q=0.995))
    with pytest.raises(QuantileConditionViolated):
        rate_rC(params(q=0.995), 1)


def test_vacuous_corruption():
    p = RateParams(50000, 0.5, 0.5, 1e-5, 3.0, 1.0)
    assert p.vacuous
    assert rate_rC_tilde(p) == 1.0
    rep = rate_r(p)
    assert rep.r == rep.r_G
    assert rep.cond_rate and rep.cond_rate_equiv and rep.is_convergent


def test_uncorrupted_limit():
    rep = rate_r(RateParams(1000, 0.3, 0.6, 0.0, 4.0, 2.0))
    assert rep.r == rep.r_G == 1 - 4 / (0.3 * 0.6 * 1000)
    assert rep.cond_sampling and rep.cond_quantile and rep.cond_rate and rep.is_convergent


def test_infeasible_flags():
    rep = rate_r(params(alpha=0.02, q=0.4))
    assert not rep.cond_sampling and not rep.is_convergent
    rep = rate_r(params(q=0.995))
    assert not rep.cond_quantile and rep.r_C_tilde == math.inf and not rep.is_convergent


feasible = st.builds(
    dict,
    m=st.integers(100, 200_000),
    alpha=st.floats(0.01, 1.0),
    q=st.floats(0.01, 0.99),
    beta=st.floats(0.0, 0.2),
    smax=st.floats(1.0, 50.0),
    ratio=st.one_of(st.just(0.0), st.floats(1e-3, 1.0)),
)


@settings(max_examples=10_000, deadline=None)
@given(feasible)
def test_condition_forms_agree(d):
    a, q, beta = d["alpha"], d["q"], d["beta"]
    assume(a * q > beta and a * (1 - q) > beta)
    sig = d["ratio"] * d["smax"]
    p = RateParams(d["m"], a, q, beta, d["smax"], sig)
    rep = rate_r(p)
    # skip draws within rounding of the boundary, where the two forms may round differently
    if sig > 0 and not p.vacuous:
        dd = p.d
        lhs = beta / (a * q) + beta * d["smax"] ** 2 / sig ** 2 * (2 / math.sqrt(beta * dd) + 1 / dd)
        assume(abs(lhs - 1) > 1e-9)
    assert rep.cond_rate == rep.cond_rate_equiv
    lo, hi = sorted((rep.r_G, rep.r_C_tilde))
    assert lo - 1e-12 <= rep.r <= hi + 1e-12
    if rep.is_convergent:
        assert rep.r < 1 and rep.cond_sampling and rep.cond_quantile and rep.cond_rate
    if sig > 0:
        assert rep.r_G < 1
    if not p.vacuous:
        assert rep.r_C_tilde >= 1


def test_condition_equiv_rejects_zero_sigma():
    assert not condition_rate_equiv(params(sig=0.0))
    assert not rate_r(params(sig=0.0)).cond_rate


def test_estimator_identity():
    A = np.eye(4)
    assert estimate_sigma_aqb_min(A, 1.0, 0.999, 0.0, num_samples=5) == pytest.approx(1.0)


def test_estimator_subset_smaller_than_n():
    A = row_normalize(np.random.default_rng(1).standard_normal((40, 10)))
    assert estimate_sigma_aqb_min(A, 0.5, 0.4, 0.0, num_samples=5) == 0.0


def test_estimator_sampling_condition():
    A = np.eye(4)
    with pytest.raises(SamplingConditionViolated):
        estimate_sigma_aqb_min(A, 0.1, 0.1, 0.5)


def test_estimator_upper_bounds_exact_minimum():
    A = row_normalize(np.random.default_rng(7).standard_normal((12, 3)))
    # size ceil((0.5 - 0) * 12) = 6
    exact = sigma_min_exact_subsets(A, 6)
    est, values = estimate_sigma_aqb_min(A, 1.0, 0.5, 0.0, num_samples=50, rng=3, return_samples=True)
    assert est >= exact - 1e-12
    assert est == values.min()
    running = np.minimum.accumulate(values)
    assert np.all(np.diff(running) <= 0)


def test_estimator_prefix_consistency():
    # fewer samples use the same leading streams, so the estimate can only rise
    A = row_normalize(np.random.default_rng(2).standard_normal((300, 8)))
    e10 = estimate_sigma_aqb_min(A, 0.5, 0.5, 0.01, num_samples=10, rng=4)
    e40 = estimate_sigma_aqb_min(A, 0.5, 0.5, 0.01, num_samples=40, rng=4)
    assert e40 <= e10


def test_estimator_monotone_in_beta():
    A = row_normalize(np.random.default_rng(3).standard_normal((500, 10)))
    vals = [estimate_sigma_aqb_min(A, 0.6, 0.5, b, num_samples=20, rng=9) for b in (0.0, 0.01, 0.05, 0.1)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_estimate_from_trace(small_system):
    s = small_system
    cfg = SolverConfig("SQRK", q=0.8, alpha=1.0, max_iters=30, seed=2, record_accepted=True,
                       record_sigma_trace=True)
    _, tr = solve(s, cfg)
    via_sigma = estimate_sigma_from_trace(s.A, [tr])
    manual = min(sigma_min_rows(s.A, acc[~s.corrupt_mask[acc]]) for acc in tr.accepted_sets)
    assert via_sigma == pytest.approx(manual, rel=1e-12)
    cfg2 = SolverConfig("SQRK", q=0.8, alpha=1.0, max_iters=30, seed=2, record_accepted=True)
    _, tr2 = solve(s, cfg2)
    assert estimate_sigma_from_trace(s.A, [tr2], s.corrupt_support) == pytest.approx(manual, rel=1e-12)
    # a superset of traces can only lower the minimum
    _, tr3 = solve(s, SolverConfig("SQRK", q=0.8, alpha=1.0, max_iters=30, seed=3, record_sigma_trace=True))
    assert estimate_sigma_from_trace(s.A, [tr, tr3]) <= via_sigma


def test_estimate_from_trace_full_set(clean_system):
    s = clean_system
    cfg = SolverConfig("SQRK", q=0.999, alpha=1.0, max_iters=1, seed=0, record_accepted=True)
    _, tr = solve(s, cfg)
    # one iteration with no corruption: the estimate is sigma_min of that accepted set
    assert estimate_sigma_from_trace(s.A, [tr]) == pytest.approx(sigma_min_rows(s.A, tr.accepted_sets[0]))


def test_estimate_from_trace_empty(small_system):
    _, tr = solve(small_system, SolverConfig("SQRK", max_iters=3))
    with pytest.raises(ValueError):
        estimate_sigma_from_trace(small_system.A, [tr])


def test_heatmap_examples():
    s = gen_gaussian_system(GenSpec(2000, 10, seed=5))
    q_grid = np.array([0.1, 0.5, 0.9])
    a_grid = np.array([0.05, 0.5, 1.0])
    hm = hypothesis_heatmap(s.A, 0.06, q_grid, a_grid, num_samples=5, seed=1)
    for i, q in enumerate(q_grid):
        for j, a in enumerate(a_grid):
            if a * q <= 0.06 or a * (1 - q) <= 0.06:
                assert not hm.satisfied[i, j]
    hm0 = hypothesis_heatmap(s.A, 0.0, q_grid, a_grid, num_samples=5, seed=1)
    assert np.all(hm0.satisfied == (hm0.sigma_est > 0))
    assert hm0.count() >= hm.count()
    assert len(list(hm.rows())) == 9


def test_heatmap_single_cell():
    s = gen_gaussian_system(GenSpec(1000, 5, seed=6))
    hm = hypothesis_heatmap(s.A, 0.001, [0.5], [1.0], num_samples=3)
    assert hm.satisfied.shape == (1, 1)


def test_heatmap_cells_independent_of_grid():
    s = gen_gaussian_system(GenSpec(800, 6, seed=6))
    full = hypothesis_heatmap(s.A, 0.01, [0.3, 0.6], [0.5, 1.0], num_samples=4, seed=2)
    again = hypothesis_heatmap(s.A, 0.01, [0.3, 0.6], [0.5, 1.0], num_samples=4, seed=2)
    np.testing.assert_array_equal(full.sigma_est, again.sigma_est)


def test_heatmap_empty_grid():
    with pytest.raises(ValueError):
        hypothesis_heatmap(np.eye(3), 0.0, [], [1.0])


def test_bound_curve():
    assert bound_curve(1.0, 1.0, 5) is None
    np.testing.assert_allclose(bound_curve(0.5, 2.0, 3), [2.0, 1.0, 0.5, 0.25])
