"""Quick property suites behind the ``verify`` subcommand.

Each suite returns a :class:`SuiteResult`; none of them takes more than a few
seconds.  The full checks live in the test suite.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .fullbayes import fit_full_bayes, truncated_uniform, TauGridConfig
from .kernel import kappa_moments
from .multitest import TwoGroupsModel, bayes_oracle, mc_bayes_risk, oracle_threshold_sq
from .priors import make_horseshoe, make_three_parameter_beta, validate_spec
from .report import RiskReport, RiskRow, read_risk_csv, write_risk_csv


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _riemann_moments(x: float, tau: float, spec, nodes: int = 200_000, span: float = 150.0):
    """Midpoint sum over u = logit(kappa); returns (E kappa, E(1 - kappa))."""
    u = -span + (np.arange(nodes) + 0.5) * (2 * span / nodes)
    log_k = -np.logaddexp(0.0, -u)
    log_1mk = -np.logaddexp(0.0, u)
    t = np.exp(log_1mk - log_k) / tau ** 2
    logf = (np.log(spec.K) + spec.a * math.log(tau ** 2) + (spec.a - 1) * log_k - (spec.a + 1) * log_1mk
            + spec.log_L(t) + 0.5 * log_k - np.exp(log_k) * x * x / 2 + log_k + log_1mk)
    z = logsumexp(logf)
    return math.exp(logsumexp(logf + log_k) - z), math.exp(logsumexp(logf + log_1mk) - z)


def suite_priors() -> SuiteResult:
    specs = [make_horseshoe(), make_three_parameter_beta(1, 1), make_three_parameter_beta(2, 0.5)]
    failed = [s.name for s in specs if not validate_spec(s, strict=False).ok]
    return SuiteResult("prior_validation", not failed, "failed: %s" % failed if failed else "%d specs" % len(specs))


def suite_quadrature() -> SuiteResult:
    worst = 0.0
    for spec in (make_horseshoe(), make_three_parameter_beta(1.0, 0.5)):
        for tau in (1e-2, 0.3):
            for x in (0.0, 2.0, 7.0):
                m = kappa_moments(x, tau, spec)
                m1, w = _riemann_moments(x, tau, spec)
                worst = max(worst, abs(m.m1 / m1 - 1), abs(m.w / w - 1))
    return SuiteResult("quadrature_vs_riemann", worst < 1e-6, "max relative error %.2e" % worst)


def suite_monotonicity() -> SuiteResult:
    spec = make_horseshoe()
    taus = np.geomspace(1e-3, 1, 20)
    xs = np.array([0.0, 1.0, 3.0, 6.0])
    W = np.array([kappa_moments(xs, t, spec).w for t in taus])
    bad = int(np.count_nonzero(np.diff(W, axis=0) < -1e-10))
    return SuiteResult("weight_monotone_in_tau", bad == 0, "%d violations" % bad)


def suite_sandwich() -> SuiteResult:
    spec = make_horseshoe()
    rng = np.random.default_rng(1)
    X = rng.standard_normal(200)
    X[:5] += 6
    prior = truncated_uniform(1 / 200, 0.05)
    fit = fit_full_bayes(X, prior, spec, TauGridConfig(16))
    w = fit.shrinkage_weight()
    lo = kappa_moments(X, prior.lo, spec).w
    hi = kappa_moments(X, prior.hi, spec).w
    ok = bool(np.all(w >= lo - 1e-12) and np.all(w <= hi + 1e-12))
    return SuiteResult("fb_weight_sandwich", ok, "n = %d" % X.size)


def suite_oracle() -> SuiteResult:
    model = TwoGroupsModel(1000, 0.1, 4.0)
    x = np.linspace(-8, 8, 4001)
    c2 = oracle_threshold_sq(model)
    x = x[np.abs(x * x - c2) > 1e-9]
    # posterior odds from the two mixture components
    log_sig = math.log(model.p) - 0.5 * math.log(1 + model.psi2) - x * x / (2 * (1 + model.psi2))
    log_null = math.log(1 - model.p) - x * x / 2
    direct = log_sig > log_null
    same = bool(np.array_equal(direct, bayes_oracle(x, model).rejections))
    return SuiteResult("oracle_equals_posterior_odds", same, "%d grid points" % x.size)


def suite_reproducibility() -> SuiteResult:
    model = TwoGroupsModel(500, 0.05, 9.0)
    rule = lambda X: bayes_oracle(X, model)
    a = mc_bayes_risk(rule, model, 4, seed=11)
    b = mc_bayes_risk(rule, model, 4, seed=11)
    ok = np.array_equal(a.losses, b.losses) and a.seeds == b.seeds
    return SuiteResult("seeded_replicates", bool(ok), "4 replicates")


def suite_csv() -> SuiteResult:
    rows = [RiskRow("abos", 100, None, 0.1, 2.5, 4.0, r, 2 ** 63 + r, "loss", 1 / 3 + r) for r in range(3)]
    rows.append(RiskRow("mse_eb", 500, 13, None, None, None, 0, 7, "mse", math.pi))
    rep = RiskReport(rows)
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "r.csv"
        write_risk_csv(rep, path)
        back = read_risk_csv(path)
    return SuiteResult("csv_round_trip", back == rep, "%d rows" % len(rows))


SUITES = (suite_priors, suite_quadrature, suite_monotonicity, suite_sandwich, suite_oracle,
          suite_reproducibility, suite_csv)


def run_all() -> list[SuiteResult]:
    out = []
    for suite in SUITES:
        started = time.perf_counter()
        try:
            res = suite()
        except Exception as exc:  # a crashing suite is a failing suite
            res = SuiteResult(suite.__name__[6:], False, "%s: %s" % (type(exc).__name__, exc))
        out.append(SuiteResult(res.name, res.passed, res.detail, time.perf_counter() - started))
    return out
