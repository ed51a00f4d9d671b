"""Two-groups multiple testing: decision rules, the Bayes oracle and risk bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import bisect
from scipy.special import ndtr

from .empirical import DEFAULT_EB, EBConfig, estimate_tau
from .fullbayes import FullBayesFit, TauGridConfig, TauPrior, fit_full_bayes
from .kernel import DEFAULT_QUAD, QuadratureConfig, kappa_moments
from .priors import PriorSpec
from .report import derive_seed

RULE_TAGS = ("fixed_tau", "eb", "fb", "oracle")
SCHEDULE_BRACKET = (1e-6, 1e6)


def normal_cdf(z):
    return ndtr(z)


@dataclass(frozen=True)
class TwoGroupsModel:
    """(1-p) delta_0 + p N(0, psi2) for the means; X = theta + N(0, 1).

    p = 0 and p = 1 are allowed for data generation only; the derived
    quantities f, v and C need p in (0, 1).
    """

    n: int
    p: float
    psi2: float
    eps: float | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer, got %r" % (self.n,))
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1], got %r" % (self.p,))
        if not self.psi2 > 0:
            raise ValueError("psi2 must be positive, got %r" % (self.psi2,))
        if self.eps is not None and not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1], got %r" % (self.eps,))

    @property
    def f(self) -> float:
        if not 0.0 < self.p < 1.0:
            raise ValueError("f = (1-p)/p needs p in (0, 1), got %r" % (self.p,))
        return (1.0 - self.p) / self.p

    @property
    def u(self) -> float:
        return self.psi2

    @property
    def v(self) -> float:
        return self.u * self.f ** 2

    @property
    def C(self) -> float:
        return math.log(self.v) / self.u

    @classmethod
    def from_schedule(cls, n: int, eps: float, C: float) -> "TwoGroupsModel":
        """p = n^-eps and psi2 from ``solve_psi2``."""
        if not 0.0 < eps <= 1.0:
            raise ValueError("eps must lie in (0, 1], got %r" % (eps,))
        p = float(n) ** (-eps)
        return cls(n=int(n), p=p, psi2=solve_psi2(p, C), eps=eps)

    @classmethod
    def from_sparsity(cls, n: int, p: float, C: float) -> "TwoGroupsModel":
        """Fixed p with psi2 from ``solve_psi2``; eps is recorded as log(1/p)/log n."""
        eps = min(1.0, -math.log(p) / math.log(n))
        return cls(n=int(n), p=float(p), psi2=solve_psi2(p, C), eps=eps)


def solve_psi2(p: float, C: float) -> float:
    """u = psi2 solving (log u + 2 log f)/u = C with f = (1-p)/p.

    g(u) = (log u + 2 log f)/u rises to its maximum at u* = e/f^2 and then
    decays to 0, so the root on the decaying branch (the larger one, where
    psi2 grows as p shrinks) is unique.  Bisection on [1e-6, 1e6].
    """
    if not C > 0:
        raise ValueError("C must be positive, got %r" % (C,))
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1), got %r" % (p,))
    two_log_f = 2.0 * math.log((1.0 - p) / p)
    g = lambda u: (math.log(u) + two_log_f) / u - C
    lo, hi = SCHEDULE_BRACKET
    lo = max(lo, math.exp(1.0 - two_log_f))
    if lo >= hi or g(lo) < 0 or g(hi) > 0:
        raise ValueError("no psi2 in [%g, %g] gives C = %g at p = %g" % (*SCHEDULE_BRACKET, C, p))
    return bisect(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=400)


@dataclass(frozen=True)
class DecisionSet:
    rejections: np.ndarray
    rule_tag: str

    def __post_init__(self):
        if self.rule_tag not in RULE_TAGS:
            raise ValueError("unknown rule tag %r" % (self.rule_tag,))
        r = np.asarray(self.rejections, dtype=bool)
        if r.ndim != 1:
            raise ValueError("rejections must be a vector")
        object.__setattr__(self, "rejections", r)

    def __len__(self):
        return self.rejections.size


@dataclass(frozen=True)
class TestingBoundParams:
    """Analysis constants for the type-II bound; never used by a decision rule."""

    eta: float
    delta: float
    rho: float

    def __post_init__(self):
        if not (0 < self.eta < 1 and 0 < self.delta < 1):
            raise ValueError("eta and delta must lie in (0, 1)")
        floor = 2.0 / (self.eta * (1.0 - self.delta))
        if not self.rho > floor:
            raise ValueError("rho must exceed 2/(eta (1-delta)) = %g, got %r" % (floor, self.rho))


# ---------------------------------------------------------------------------
# decision rules
# ---------------------------------------------------------------------------

def _vector(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 1 or X.size == 0:
        raise ValueError("X must be a non-empty vector")
    return X


def rule_fixed_tau(X, tau: float, spec: PriorSpec, cfg: QuadratureConfig = DEFAULT_QUAD,
                   tag: str = "fixed_tau") -> DecisionSet:
    """Reject where E(1 - kappa | X_i, tau) > 1/2; ties accept."""
    X = _vector(X)
    return DecisionSet(kappa_moments(X, tau, spec, cfg).w > 0.5, tag)


def rule_eb(X, spec: PriorSpec, eb_cfg: EBConfig = DEFAULT_EB,
            quad_cfg: QuadratureConfig = DEFAULT_QUAD) -> DecisionSet:
    X = _vector(X)
    return rule_fixed_tau(X, estimate_tau(X, eb_cfg), spec, quad_cfg, tag="eb")


def rule_fb(X, prior: TauPrior, spec: PriorSpec, grid: TauGridConfig = TauGridConfig(),
            quad: QuadratureConfig = DEFAULT_QUAD, *, fit: FullBayesFit | None = None) -> DecisionSet:
    """Reject where the tau-averaged shrinkage weight exceeds 1/2."""
    if fit is None:
        fit = fit_full_bayes(_vector(X), prior, spec, grid, quad)
    return DecisionSet(fit.shrinkage_weight() > 0.5, "fb")


def oracle_threshold_sq(model: TwoGroupsModel) -> float:
    psi2 = model.psi2
    return (1.0 + psi2) / psi2 * (math.log1p(psi2) + 2.0 * math.log(model.f))


def bayes_oracle(X, model: TwoGroupsModel) -> DecisionSet:
    """Reject where X_i^2 > c^2, the Bayes rule for the generating mixture."""
    X = _vector(X)
    c2 = oracle_threshold_sq(model)
    if c2 < 0:
        raise ValueError("oracle threshold c^2 = %g < 0 for p = %g, psi2 = %g" % (c2, model.p, model.psi2))
    return DecisionSet(X * X > c2, "oracle")


def misclassification_counts(decisions: DecisionSet, nu) -> tuple[int, int]:
    """(false positives, false negatives)."""
    nu = np.asarray(nu, dtype=bool)
    r = decisions.rejections
    if nu.shape != r.shape:
        raise ValueError("length mismatch: %d decisions, %d labels" % (r.size, nu.size))
    return int(np.count_nonzero(r & ~nu)), int(np.count_nonzero(~r & nu))


def misclassification_loss(decisions: DecisionSet, nu) -> int:
    fp, fn = misclassification_counts(decisions, nu)
    return fp + fn


# ---------------------------------------------------------------------------
# risk formulas
# ---------------------------------------------------------------------------

def oracle_optimal_risk(n: int, p: float, C: float) -> float:
    """n p (2 Phi(sqrt C) - 1)."""
    if not C > 0:
        raise ValueError("C must be positive, got %r" % (C,))
    return n * p * (2.0 * float(normal_cdf(math.sqrt(C))) - 1.0)


def type1_error_bound(alpha_n: float, a: float) -> float:
    """alpha^(2a) / (sqrt(pi a) sqrt(log(1/alpha^2)))."""
    if not 0.0 < alpha_n < 1.0:
        raise ValueError("alpha_n must lie in (0, 1), got %r" % (alpha_n,))
    if not 0.0 < a < 1.0:
        raise ValueError("a must lie in (0, 1), got %r" % (a,))
    return alpha_n ** (2 * a) / math.sqrt(math.pi * a) / math.sqrt(-2.0 * math.log(alpha_n))


def type2_error_bound(a: float, rho: float, C: float, eps: float) -> float:
    """2 Phi(sqrt(a rho C / eps)) - 1."""
    if not (a > 0 and rho > 0 and C >= 0):
        raise ValueError("a, rho must be positive and C non-negative")
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1], got %r" % (eps,))
    return 2.0 * float(normal_cdf(math.sqrt(a * rho * C / eps))) - 1.0


# ---------------------------------------------------------------------------
# Monte Carlo risk
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RiskEstimate:
    t1_hat: float
    t2_hat: float
    risk_hat: float
    se: float
    t1_se: float
    t2_se: float
    t2_defined: bool
    false_pos: np.ndarray
    false_neg: np.ndarray
    nulls: np.ndarray
    seeds: tuple

    @property
    def losses(self) -> np.ndarray:
        return self.false_pos + self.false_neg


Rule = Callable[[np.ndarray], DecisionSet]


def replicate_seeds(root: int, reps: int, key: tuple = ()) -> list[int]:
    """Per-replicate 64-bit seeds derived from the root seed and a row key."""
    return [derive_seed(root, *key, r) for r in range(reps)]


def gen_two_groups(model: TwoGroupsModel, rng: np.random.Generator):
    """(theta, nu): nu_i ~ Bernoulli(p), theta_i ~ N(0, psi2) where nu_i else 0."""
    nu = rng.random(model.n) < model.p
    theta = np.where(nu, rng.normal(0.0, math.sqrt(model.psi2), model.n), 0.0)
    return theta, nu


def mc_bayes_risk(rule: Rule, model: TwoGroupsModel, reps: int, seed: int = 0, key: tuple = ()) -> RiskEstimate:
    """Replicate the two-groups experiment and average the misclassification counts.

    Replicate r draws from its own stream seeded by ``replicate_seeds``, so
    results do not depend on evaluation order.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    seeds = replicate_seeds(seed, reps, key)
    fp = np.zeros(reps, dtype=np.int64)
    fn = np.zeros(reps, dtype=np.int64)
    nulls = np.zeros(reps, dtype=np.int64)
    for r, s in enumerate(seeds):
        rng = np.random.default_rng(s)
        theta, nu = gen_two_groups(model, rng)
        X = theta + rng.standard_normal(model.n)
        fp[r], fn[r] = misclassification_counts(rule(X), nu)
        nulls[r] = model.n - int(np.count_nonzero(nu))
    signals = model.n - nulls
    t1 = fp / np.maximum(nulls, 1)
    has_sig = signals > 0
    t2 = fn[has_sig] / signals[has_sig]
    loss = (fp + fn).astype(float)
    sd = lambda v: float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
    return RiskEstimate(
        t1_hat=float(np.mean(t1)),
        t2_hat=float(np.mean(t2)) if t2.size else float("nan"),
        risk_hat=float(np.mean(loss)),
        se=sd(loss),
        t1_se=sd(t1),
        t2_se=sd(t2),
        t2_defined=bool(t2.size),
        false_pos=fp, false_neg=fn, nulls=nulls, seeds=tuple(seeds),
    )
