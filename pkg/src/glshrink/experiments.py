"""Data generators and end-to-end experiment drivers.

Every replicate draws from its own stream, seeded by ``derive_seed(root, n,
replicate)`` (testing scenarios add the setting index), so a report is a
pure function of its config.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .empirical import EBConfig, eb_sample, estimate_tau, _pairwise_sum, exceedance_probability
from .fullbayes import (TauGridConfig, TauPrior, fb_sample_theta, fit_full_bayes,
                        testing_uniform_prior, truncated_half_cauchy,
                        truncated_uniform)
from .kernel import DEFAULT_QUAD, kappa_moments
from .multitest import (TestingBoundParams, TwoGroupsModel, bayes_oracle, gen_two_groups,
                        mc_bayes_risk, oracle_optimal_risk, rule_fb, type1_error_bound,
                        type2_error_bound)
from .priors import PriorSpec, prior_from_name
from .report import AGGREGATE, RiskReport, RiskRow, derive_seed

SCENARIOS = ("mse_eb", "mse_fb", "variance_eb", "variance_fb", "contraction", "abos", "type1",
             "oracle_check")
ESTIMATION_PRIORS = ("half_cauchy", "uniform")


class InvalidExperiment(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


@dataclass(frozen=True)
class SparseVector:
    theta0: np.ndarray
    q_n: int
    beta: float | None = None


def default_signal(n: int) -> float:
    return 5.0 * math.sqrt(2.0 * math.log(n))


def support_size(n: int, beta: float, scale: float = 1.0) -> int:
    return int(math.ceil(scale * n ** beta))


def gen_nearly_black(n: int, q_n: int, signal: float | None, rng: np.random.Generator,
                     beta: float | None = None) -> SparseVector:
    """q_n uniformly chosen coordinates set to ``signal``; the rest are 0."""
    if not 0 <= q_n <= n:
        raise ValueError("need 0 <= q_n <= n, got q_n = %d, n = %d" % (q_n, n))
    if signal is None:
        signal = default_signal(n)
    theta = np.zeros(n)
    theta[rng.choice(n, size=q_n, replace=False)] = signal
    return SparseVector(theta, int(q_n), beta)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    n_grid: tuple = (500, 2000, 8000)
    replicates: int = 20
    seed: int = 0
    # nearly-black truth
    beta: float = 0.4
    q_scale: float = 1.0
    q_n: int | None = None
    signal: float | None = None
    # priors
    prior: str = "horseshoe"
    prior_params: dict = field(default_factory=dict)
    tau_prior: str = "half_cauchy"
    tau_grid: int = 200
    test_tau_grid: int = 24
    c1: float = 2.0
    c2: float = 1.0
    # contraction
    method: str = "eb"
    M_list: tuple = (20.0,)
    draws: int = 1000
    # testing
    p_list: tuple = (0.01, 0.02)
    C_list: tuple = (4.0,)
    eps: float | None = None
    psi2_list: tuple = ()
    c_n: float | None = None
    eta: float = 0.5
    delta: float = 0.5
    rho: float = 8.5
    threads: int = 1

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise InvalidExperiment(problems)

    def violations(self) -> list[str]:
        out = []
        if self.scenario not in SCENARIOS:
            out.append("scenario must be one of %s, got %r" % (", ".join(SCENARIOS), self.scenario))
        if not self.n_grid or any(int(n) != n or n < 2 for n in self.n_grid):
            out.append("n_grid must be a non-empty list of integers >= 2")
        if self.replicates < 1:
            out.append("replicates must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            out.append("seed must be an unsigned 64-bit integer")
        if not 0 < self.beta < 1:
            out.append("beta must lie in (0, 1)")
        if self.q_scale <= 0:
            out.append("q_scale must be positive")
        if self.q_n is not None and (self.q_n < 0 or any(self.q_n > n for n in self.n_grid)):
            out.append("q_n must lie in [0, min(n_grid)]")
        if self.c1 < 2:
            out.append("c1 must be >= 2, got %r" % (self.c1,))
        if self.c2 < 1:
            out.append("c2 must be >= 1, got %r" % (self.c2,))
        if self.tau_prior not in ESTIMATION_PRIORS:
            out.append("tau_prior must be one of %s" % (ESTIMATION_PRIORS,))
        if self.tau_grid < 2 or self.test_tau_grid < 2:
            out.append("tau grids need at least 2 nodes")
        if self.method not in ("eb", "fb"):
            out.append("method must be 'eb' or 'fb'")
        if any(M < 0 for M in self.M_list):
            out.append("M_list entries must be non-negative")
        if self.draws < 1000:
            out.append("draws must be >= 1000")
        if any(not 0 < p < 1 for p in self.p_list):
            out.append("p_list entries must lie in (0, 1)")
        if any(C <= 0 for C in self.C_list):
            out.append("C_list entries must be positive")
        if self.eps is not None and not 0 < self.eps <= 1:
            out.append("eps must lie in (0, 1]")
        if any(v <= 0 for v in self.psi2_list):
            out.append("psi2_list entries must be positive")
        if not (0 < self.eta < 1 and 0 < self.delta < 1):
            out.append("eta and delta must lie in (0, 1)")
        elif not self.rho > 2 / (self.eta * (1 - self.delta)):
            out.append("rho must exceed 2/(eta (1 - delta))")
        if self.threads < 1:
            out.append("threads must be >= 1")
        return out

    @property
    def eb(self) -> EBConfig:
        return EBConfig(self.c1, self.c2)

    def spec(self) -> PriorSpec:
        return prior_from_name(self.prior, **self.prior_params)

    def q_for(self, n: int) -> int:
        return self.q_n if self.q_n is not None else support_size(n, self.beta, self.q_scale)

    def estimation_prior(self, n: int) -> TauPrior:
        if self.tau_prior == "half_cauchy":
            return truncated_half_cauchy(1.0 / n, 1.0)
        return truncated_uniform(1.0 / n, 1.0)

    def models(self, n: int) -> list[TwoGroupsModel]:
        """Two-groups settings at size n, in a fixed order."""
        if self.psi2_list:
            return [TwoGroupsModel(n, p, v) for p in self.p_list for v in self.psi2_list]
        if self.eps is not None:
            return [TwoGroupsModel.from_schedule(n, self.eps, C) for C in self.C_list]
        return [TwoGroupsModel.from_sparsity(n, p, C) for p in self.p_list for C in self.C_list]


def scenario_defaults(scenario: str) -> dict:
    """Desk-scale defaults that differ from the dataclass defaults."""
    if scenario in ("abos", "type1", "oracle_check"):
        return {"n_grid": (10000,), "replicates": 100}
    return {}


def make_config(scenario: str, **overrides) -> ExperimentConfig:
    kw = scenario_defaults(scenario)
    kw.update(overrides)
    return ExperimentConfig(scenario=scenario, **kw)


# ---------------------------------------------------------------------------
# estimation scenarios
# ---------------------------------------------------------------------------

def minimax_benchmark(n: int, q_n: int) -> float:
    return 2.0 * q_n * math.log(n / q_n)


def near_minimax_benchmark(n: int, q_n: int) -> float:
    return q_n * math.log(n)


class _Rows:
    def __init__(self, scenario: str):
        self.report = RiskReport()
        self.scenario = scenario

    def __call__(self, n, replicate, seed, metric, value, q_n=None, model=None, p=None):
        self.report.add(RiskRow(
            self.scenario, int(n), q_n, p if model is None else float(model.p),
            None if model is None else float(model.psi2),
            None if model is None else float(model.C) if 0 < model.p < 1 else None,
            int(replicate), int(seed), metric, float(value)))


def _replicate_data(cfg: ExperimentConfig, n: int, rep: int):
    seed = derive_seed(cfg.seed, n, rep)
    rng = np.random.default_rng(seed)
    q = cfg.q_for(n)
    truth = gen_nearly_black(n, q, cfg.signal, rng, None if cfg.q_n is not None else cfg.beta)
    X = truth.theta0 + rng.standard_normal(n)
    return seed, rng, truth, X


def run_estimation(cfg: ExperimentConfig, method: str, parts=("mse", "variance")) -> RiskReport:
    """Shared pass behind the mse and variance scenarios.

    ``method`` is ``eb`` or ``fb``; ``parts`` picks which metric groups to emit.
    Both groups come from the same data and fit.
    """
    spec = cfg.spec()
    rows = _Rows(cfg.scenario)
    grid = TauGridConfig(cfg.tau_grid, cfg.threads)
    for n in cfg.n_grid:
        q = cfg.q_for(n)
        for rep in range(cfg.replicates):
            seed, _, truth, X = _replicate_data(cfg, n, rep)
            started = time.perf_counter()
            tau_hat = estimate_tau(X, cfg.eb)
            eb_mom = kappa_moments(X, tau_hat, spec, DEFAULT_QUAD)
            eb_est = eb_mom.w * X
            if method == "eb":
                est = eb_est
                var = eb_mom.w + X * X * eb_mom.var_kappa
                rows(n, rep, seed, "tau_hat", tau_hat, q)
            else:
                fit = fit_full_bayes(X, cfg.estimation_prior(n), spec, grid, DEFAULT_QUAD)
                est = fit.posterior_mean()
                var = fit.posterior_variance()
                rows(n, rep, seed, "tau_posterior_mean", fit.posterior.mean(), q)
            rows.report.timings["%s/n=%d/rep=%d" % (method, n, rep)] = time.perf_counter() - started
            if "mse" in parts:
                mse = float(np.sum((est - truth.theta0) ** 2))
                bench = minimax_benchmark(n, q) if q > 0 else float("nan")
                rows(n, rep, seed, "mse", mse, q)
                if q > 0:
                    rows(n, rep, seed, "minimax_benchmark", bench, q)
                    rows(n, rep, seed, "mse_ratio", mse / bench, q)
                if method == "fb":
                    mse_eb = float(np.sum((eb_est - truth.theta0) ** 2))
                    rows(n, rep, seed, "mse_eb_reference", mse_eb, q)
                    rows(n, rep, seed, "fb_eb_sqdist", float(np.sum((est - eb_est) ** 2)), q)
            if "variance" in parts:
                total = _pairwise_sum(var)
                rows(n, rep, seed, "total_variance", total, q)
                if q > 0:
                    bench = near_minimax_benchmark(n, q)
                    rows(n, rep, seed, "near_minimax_benchmark", bench, q)
                    rows(n, rep, seed, "variance_ratio", total / bench, q)
    return rows.report


def run_mse_experiment(cfg: ExperimentConfig) -> RiskReport:
    if cfg.scenario not in ("mse_eb", "mse_fb"):
        raise ValueError("run_mse_experiment needs scenario mse_eb or mse_fb")
    return run_estimation(cfg, cfg.scenario[4:], parts=("mse",))


def run_variance_experiment(cfg: ExperimentConfig) -> RiskReport:
    if cfg.scenario not in ("variance_eb", "variance_fb"):
        raise ValueError("run_variance_experiment needs scenario variance_eb or variance_fb")
    return run_estimation(cfg, cfg.scenario[9:], parts=("variance",))


def _metric_M(prefix: str, M: float) -> str:
    return "%s_M%g" % (prefix, M)


def run_contraction_experiment(cfg: ExperimentConfig) -> RiskReport:
    """Posterior mass outside radius M q_n log n around the truth and the posterior mean.

    The radius bounds the squared distance ||theta - centre||^2.
    """
    if not cfg.M_list:
        raise ValueError("contraction needs a non-empty M_list")
    spec = cfg.spec()
    rows = _Rows(cfg.scenario)
    grid = TauGridConfig(cfg.tau_grid, cfg.threads)
    for n in cfg.n_grid:
        q = cfg.q_for(n)
        for rep in range(cfg.replicates):
            seed, rng, truth, X = _replicate_data(cfg, n, rep)
            started = time.perf_counter()
            if cfg.method == "eb":
                tau_hat = estimate_tau(X, cfg.eb)
                centre = kappa_moments(X, tau_hat, spec).w * X
                draws = eb_sample(X, spec, rng, cfg.draws, cfg.eb)
            else:
                prior = cfg.estimation_prior(n)
                fit = fit_full_bayes(X, prior, spec, grid, DEFAULT_QUAD)
                centre = fit.posterior_mean()
                draws = fb_sample_theta(X, prior, spec, rng, cfg.draws, grid, fit=fit)
            rows.report.timings["contraction/%s/n=%d/rep=%d" % (cfg.method, n, rep)] = \
                time.perf_counter() - started
            scale = near_minimax_benchmark(n, q) if q > 0 else math.log(n)
            rows(n, rep, seed, "radius_scale", scale, q)
            for M in cfg.M_list:
                r = M * scale
                rows(n, rep, seed, _metric_M("mass_truth", M), exceedance_probability(draws, truth.theta0, r), q)
                rows(n, rep, seed, _metric_M("mass_estimate", M), exceedance_probability(draws, centre, r), q)
    return rows.report


# ---------------------------------------------------------------------------
# testing scenarios
# ---------------------------------------------------------------------------

def _ratio_se(num: np.ndarray, den: np.ndarray) -> float:
    """Delta-method standard error of mean(num)/mean(den) for paired replicates."""
    k = num.size
    if k < 2 or den.mean() == 0:
        return float("nan")
    R = num.mean() / den.mean()
    return float(np.std(num - R * den, ddof=1) / math.sqrt(k) / den.mean())


def run_abos_experiment(cfg: ExperimentConfig) -> RiskReport:
    """Full-Bayes rule against the Bayes oracle on the same simulated data.

    Both rules see identical datasets (same per-replicate seeds), so the
    risk ratio's standard error is computed from paired losses.
    """
    spec = cfg.spec()
    rows = _Rows(cfg.scenario)
    grid = TauGridConfig(cfg.test_tau_grid, cfg.threads)
    bounds = TestingBoundParams(cfg.eta, cfg.delta, cfg.rho)
    for n in cfg.n_grid:
        prior = testing_uniform_prior(n, cfg.c_n)
        alpha = prior.hi
        for k, model in enumerate(cfg.models(n)):
            key = (n, k)
            started = time.perf_counter()
            fb = mc_bayes_risk(lambda X: rule_fb(X, prior, spec, grid), model, cfg.replicates, cfg.seed, key)
            orc = mc_bayes_risk(lambda X: bayes_oracle(X, model), model, cfg.replicates, cfg.seed, key)
            rows.report.timings["abos/n=%d/setting=%d" % (n, k)] = time.perf_counter() - started
            for rep, s in enumerate(fb.seeds):
                for tag, est in (("fb", fb), ("oracle", orc)):
                    rows(n, rep, s, "false_pos_" + tag, est.false_pos[rep], model=model)
                    rows(n, rep, s, "false_neg_" + tag, est.false_neg[rep], model=model)
                    rows(n, rep, s, "loss_" + tag, est.losses[rep], model=model)
            agg = lambda metric, value: rows(n, AGGREGATE, cfg.seed, metric, value, model=model)
            for tag, est in (("fb", fb), ("oracle", orc)):
                agg("risk_" + tag, est.risk_hat)
                agg("risk_se_" + tag, est.se)
                agg("t1_" + tag, est.t1_hat)
                agg("t1_se_" + tag, est.t1_se)
                if est.t2_defined:
                    agg("t2_" + tag, est.t2_hat)
                    agg("t2_se_" + tag, est.t2_se)
            if orc.risk_hat > 0:
                agg("risk_ratio", fb.risk_hat / orc.risk_hat)
                agg("risk_ratio_se", _ratio_se(fb.losses.astype(float), orc.losses.astype(float)))
            agg("oracle_formula", oracle_optimal_risk(n, model.p, model.C))
            agg("alpha_n", alpha)
            agg("type1_bound", type1_error_bound(alpha, spec.a))
            agg("type2_bound", type2_error_bound(spec.a, bounds.rho, model.C, model.eps))
    return rows.report


def run_type1_experiment(cfg: ExperimentConfig) -> RiskReport:
    """Rejection rate of the full-Bayes rule on all-null data."""
    spec = cfg.spec()
    rows = _Rows(cfg.scenario)
    grid = TauGridConfig(cfg.test_tau_grid, cfg.threads)
    for n in cfg.n_grid:
        prior = testing_uniform_prior(n, cfg.c_n)
        rates = []
        for rep in range(cfg.replicates):
            seed = derive_seed(cfg.seed, n, rep)
            X = np.random.default_rng(seed).standard_normal(n)
            rate = float(np.mean(rule_fb(X, prior, spec, grid).rejections))
            rates.append(rate)
            rows(n, rep, seed, "t1", rate, p=0.0)
        rates = np.asarray(rates)
        bound = type1_error_bound(prior.hi, spec.a)
        agg = lambda metric, value: rows(n, AGGREGATE, cfg.seed, metric, value, p=0.0)
        agg("t1_hat", rates.mean())
        if rates.size > 1:
            agg("t1_se", rates.std(ddof=1) / math.sqrt(rates.size))
        agg("alpha_n", prior.hi)
        agg("type1_bound", bound)
        agg("t1_bound_ratio", rates.mean() / bound)
    return rows.report


def run_oracle_check(cfg: ExperimentConfig) -> RiskReport:
    """Monte Carlo risk of the Bayes oracle against the closed-form risk."""
    rows = _Rows(cfg.scenario)
    for n in cfg.n_grid:
        for k, model in enumerate(cfg.models(n)):
            est = mc_bayes_risk(lambda X: bayes_oracle(X, model), model, cfg.replicates, cfg.seed, (n, k))
            for rep, s in enumerate(est.seeds):
                rows(n, rep, s, "loss_oracle", est.losses[rep], model=model)
            formula = oracle_optimal_risk(n, model.p, model.C)
            agg = lambda metric, value: rows(n, AGGREGATE, cfg.seed, metric, value, model=model)
            agg("risk_oracle", est.risk_hat)
            agg("risk_se_oracle", est.se)
            agg("oracle_formula", formula)
            agg("risk_formula_ratio", est.risk_hat / formula)
    return rows.report


def run_experiment(cfg: ExperimentConfig) -> RiskReport:
    s = cfg.scenario
    if s in ("mse_eb", "mse_fb"):
        return run_mse_experiment(cfg)
    if s in ("variance_eb", "variance_fb"):
        return run_variance_experiment(cfg)
    if s == "contraction":
        return run_contraction_experiment(cfg)
    if s == "abos":
        return run_abos_experiment(cfg)
    if s == "type1":
        return run_type1_experiment(cfg)
    return run_oracle_check(cfg)
