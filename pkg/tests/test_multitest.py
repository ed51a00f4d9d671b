import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats

from glshrink import fullbayes, multitest as mt
from glshrink.fullbayes import TauGridConfig
from glshrink.multitest import (DecisionSet, TwoGroupsModel, bayes_oracle, gen_two_groups, mc_bayes_risk,
                                misclassification_counts, misclassification_loss, normal_cdf,
                                oracle_optimal_risk, oracle_threshold_sq, replicate_seeds, rule_eb,
                                rule_fb, rule_fixed_tau, solve_psi2, type1_error_bound, type2_error_bound)
from glshrink.priors import make_horseshoe
from oracles import normal_cdf_series

HS = make_horseshoe()


# --- normal CDF ---------------------------------------------------------------

@pytest.mark.parametrize("z", [-3.0, -1.0, 0.0, 0.5, 2.0, math.sqrt(2), 4.0])
def test_normal_cdf_against_series(z):
    assert float(normal_cdf(z)) == pytest.approx(normal_cdf_series(z), abs=1e-14)


def test_phi_of_two():
    assert float(normal_cdf(2.0)) == pytest.approx(0.97725, abs=1e-5)


# --- model --------------------------------------------------------------------

def test_model_derived_quantities():
    m = TwoGroupsModel(100, 0.1, 4.0)
    assert m.f == pytest.approx(9.0) and m.u == 4.0
    assert m.v == pytest.approx(m.u * m.f ** 2, rel=1e-12)
    assert m.C == pytest.approx(math.log(324) / 4, rel=1e-14)


def test_model_ranges():
    for bad in [dict(n=0, p=0.1, psi2=1), dict(n=10, p=1.5, psi2=1), dict(n=10, p=0.1, psi2=0),
                dict(n=10, p=0.1, psi2=1, eps=0.0), dict(n=2.5, p=0.1, psi2=1)]:
        with pytest.raises(ValueError):
            TwoGroupsModel(**bad)
    with pytest.raises(ValueError):
        TwoGroupsModel(10, 0.0, 1.0).f


@settings(max_examples=60, deadline=None)
@given(p=st.floats(1e-4, 0.2), C=st.floats(0.2, 8.0))
def test_solve_psi2_hits_C(p, C):
    f = (1 - p) / p
    # sup_u g(u) = f^2/e; above that no psi2 exists
    assume(C < 0.999 * f * f / math.e)
    u = solve_psi2(p, C)
    assert (math.log(u) + 2 * math.log(f)) / u == pytest.approx(C, rel=1e-9)
    # root on the decaying branch
    assert u >= math.e / f ** 2


def test_solve_psi2_infeasible():
    with pytest.raises(ValueError, match="no psi2"):
        solve_psi2(0.2, 6.0)  # 16/e < 6


def test_schedule_worked_value():
    m = TwoGroupsModel.from_schedule(10**4, 0.5, 4.0)
    assert m.p == pytest.approx(0.01) and m.eps == 0.5
    assert m.psi2 == pytest.approx(2.52957, rel=1e-5)
    assert m.C == pytest.approx(4.0, rel=1e-10)


def test_from_sparsity_records_eps():
    m = TwoGroupsModel.from_sparsity(10**4, 0.01, 4.0)
    assert m.eps == pytest.approx(0.5, rel=1e-14)
    assert m.C == pytest.approx(4.0, rel=1e-10)


def test_solve_psi2_domain():
    with pytest.raises(ValueError):
        solve_psi2(0.01, 0.0)
    with pytest.raises(ValueError):
        solve_psi2(1.0, 1.0)


# --- decision sets and rules ------------------------------------------------

def test_decision_set_validation():
    with pytest.raises(ValueError):
        DecisionSet(np.zeros(3, bool), "bh")
    with pytest.raises(ValueError):
        DecisionSet(np.zeros((2, 2), bool), "eb")
    assert len(DecisionSet(np.zeros(4), "eb")) == 4


def test_fixed_tau_examples():
    assert not rule_fixed_tau(np.array([0.0]), 0.01, HS).rejections[0]
    assert rule_fixed_tau(np.array([10.0]), 0.1, HS).rejections[0]


def test_fixed_tau_tie_accepts(monkeypatch):
    class Half:
        w = np.array([0.5, 0.5000001])
    monkeypatch.setattr(mt, "kappa_moments", lambda *a, **k: Half)
    assert list(rule_fixed_tau(np.array([1.0, 1.0]), 0.1, HS).rejections) == [False, True]


def test_fixed_tau_nested_in_tau():
    X = np.random.default_rng(0).standard_normal(200) * 3
    prev = np.zeros(200, bool)
    for tau in np.geomspace(1e-3, 1, 12):
        cur = rule_fixed_tau(X, tau, HS).rejections
        assert np.all(cur >= prev)
        prev = cur


def test_eb_rule_examples():
    X = np.zeros(100)
    assert not rule_eb(X, HS).rejections.any()
    X[7] = 30.0
    r = rule_eb(X, HS).rejections
    assert r[7] and r.sum() == 1
    Y = np.random.default_rng(1).standard_normal(100) * 3
    np.testing.assert_array_equal(rule_eb(Y, HS).rejections, rule_eb(-Y, HS).rejections)
    assert rule_eb(Y, HS).rule_tag == "eb"


def test_fb_rule_dominated_by_upper_end():
    n = 1000
    alpha = fullbayes.testing_alpha(n)
    prior = fullbayes.testing_uniform_prior(n)
    rng = np.random.default_rng(2)
    X = rng.standard_normal(n)
    X[:20] += 7
    grid = TauGridConfig(24)
    fb = rule_fb(X, prior, HS, grid).rejections
    fixed = rule_fixed_tau(X, alpha, HS).rejections
    assert np.all(fb <= fixed)
    # large observations are rejected
    big = np.abs(X) > math.sqrt(4 * HS.a * math.log(1 / alpha)) + 2
    assert big.sum() > 0 and np.all(fb[big])
    perm = rng.permutation(n)
    np.testing.assert_array_equal(rule_fb(X[perm], prior, HS, grid).rejections, fb[perm])


def test_oracle_threshold_worked_value():
    m = TwoGroupsModel(100, 0.1, 4.0)
    assert oracle_threshold_sq(m) == pytest.approx(1.25 * (math.log(5) + 2 * math.log(9)), rel=1e-14)
    assert oracle_threshold_sq(m) == pytest.approx(7.50486, abs=1e-5)
    assert math.sqrt(oracle_threshold_sq(m)) == pytest.approx(2.73950, abs=1e-5)
    assert oracle_threshold_sq(TwoGroupsModel(100, 0.5, 4.0)) == pytest.approx(1.25 * math.log(5), rel=1e-14)


def test_oracle_negative_threshold_rejected():
    with pytest.raises(ValueError, match="p = 0.9"):
        bayes_oracle(np.zeros(3), TwoGroupsModel(3, 0.9, 4.0))


@pytest.mark.parametrize("p,psi2", [(0.1, 4.0), (0.01, 2.5), (0.3, 10.0)])
def test_oracle_equals_posterior_odds(p, psi2):
    x = np.linspace(-8, 8, 20001)
    m = TwoGroupsModel(x.size, p, psi2)
    slab = p * stats.norm.pdf(x, scale=math.sqrt(1 + psi2))
    null = (1 - p) * stats.norm.pdf(x)
    post = slab / (slab + null)
    np.testing.assert_array_equal(bayes_oracle(x, m).rejections, post > 0.5)
    assert not bayes_oracle(np.zeros(1), TwoGroupsModel(1, p, psi2)).rejections[0]


# --- loss ---------------------------------------------------------------------

def test_loss_counts():
    nu = np.array([True, False, True, False, True])
    assert misclassification_loss(DecisionSet(nu, "oracle"), nu) == 0
    assert misclassification_loss(DecisionSet(~nu, "oracle"), nu) == 5
    d = DecisionSet(np.array([False, True, False, False, True]), "oracle")
    assert misclassification_counts(d, nu) == (1, 2)
    assert misclassification_loss(d, nu) == 3
    with pytest.raises(ValueError):
        misclassification_loss(d, nu[:3])


# --- risk formulas ------------------------------------------------------------

def test_oracle_risk_formula():
    assert oracle_optimal_risk(1000, 0.01, 4.0) == pytest.approx(9.5450, abs=1e-4)
    assert oracle_optimal_risk(1000, 0.0, 4.0) == 0
    assert oracle_optimal_risk(1000, 0.01, 1e4) == pytest.approx(10.0, rel=1e-12)
    with pytest.raises(ValueError):
        oracle_optimal_risk(1000, 0.01, 0.0)


def test_type1_bound():
    assert type1_error_bound(0.01, 0.5) == pytest.approx(2.6291e-3, rel=1e-4)
    grid = np.linspace(1e-4, 0.1, 200)
    vals = [type1_error_bound(a, 0.5) for a in grid]
    assert np.all(np.diff(vals) > 0)
    assert type1_error_bound(1e-300, 0.5) < 1e-150
    with pytest.raises(ValueError):
        type1_error_bound(1.0, 0.5)
    with pytest.raises(ValueError):
        type1_error_bound(0.1, 1.0)


def test_type2_bound():
    assert type2_error_bound(0.5, 4, 1, 1) == pytest.approx(0.84270, abs=1e-5)
    assert type2_error_bound(0.5, 4, 0, 1) == 0
    vals = [type2_error_bound(0.5, r, 1, 0.5) for r in (1, 2, 4, 8)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_bound_params():
    mt.TestingBoundParams(0.5, 0.5, 8.5)
    with pytest.raises(ValueError):
        mt.TestingBoundParams(0.5, 0.5, 8.0)
    with pytest.raises(ValueError):
        mt.TestingBoundParams(1.0, 0.5, 100)


# --- Monte Carlo risk ---------------------------------------------------------

def test_generator_proportion():
    m = TwoGroupsModel(10**5, 0.05, 9.0)
    theta, nu = gen_two_groups(m, np.random.default_rng(0))
    assert abs(nu.mean() - 0.05) < 4 * math.sqrt(0.05 * 0.95 / m.n)
    assert np.all(theta[~nu] == 0)
    assert np.var(theta[nu]) == pytest.approx(9.0, rel=0.05)


def test_oracle_risk_monte_carlo():
    m = TwoGroupsModel.from_sparsity(10**4, 0.01, 4.0)
    est = mc_bayes_risk(lambda X: bayes_oracle(X, m), m, 50, seed=1)
    assert est.risk_hat == pytest.approx(oracle_optimal_risk(m.n, m.p, 4.0), rel=0.15)
    np.testing.assert_array_equal(est.losses, est.false_pos + est.false_neg)


@pytest.mark.parametrize("always,target", [(False, "p"), (True, "1-p")])
def test_trivial_rules(always, target):
    m = TwoGroupsModel(2000, 0.05, 4.0)
    est = mc_bayes_risk(lambda X: DecisionSet(np.full(X.size, always), "fixed_tau"), m, 40, seed=3)
    expect = m.p if target == "p" else 1 - m.p
    assert abs(est.risk_hat / m.n - expect) <= 4 * est.se / m.n
    if always:
        assert est.t1_hat == 1 and est.t2_hat == 0
    else:
        assert est.t1_hat == 0 and est.t2_hat == 1


def test_no_signals_flagged():
    m = TwoGroupsModel(50, 0.0, 4.0)
    est = mc_bayes_risk(lambda X: DecisionSet(np.zeros(X.size, bool), "oracle"), m, 3)
    assert not est.t2_defined and math.isnan(est.t2_hat)


def test_risk_seeded_and_order_free():
    m = TwoGroupsModel(500, 0.05, 6.0)
    rule = lambda X: bayes_oracle(X, m)
    a = mc_bayes_risk(rule, m, 6, seed=42)
    b = mc_bayes_risk(rule, m, 6, seed=42)
    assert a.seeds == b.seeds and a.risk_hat == b.risk_hat
    # the first replicates do not depend on how many follow
    c = mc_bayes_risk(rule, m, 3, seed=42)
    np.testing.assert_array_equal(c.false_pos, a.false_pos[:3])
    assert replicate_seeds(42, 3) == list(a.seeds[:3])
    with pytest.raises(ValueError):
        mc_bayes_risk(rule, m, 0)
