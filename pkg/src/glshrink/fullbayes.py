"""Hierarchical treatment of the global scale: a prior on tau over a compact interval.

The posterior of tau is discretized on a log-spaced grid with trapezoid
weights in log tau; every full-Bayes quantity is an average of the
fixed-tau kernel over that grid.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .kernel import (DEFAULT_QUAD, QuadratureConfig, kappa_moments, log_marginal_from_norm,
                     sample_theta_batch)
from .priors import PriorSpec

DEFAULT_TAU_GRID = 200


class TauPosteriorError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# priors on tau
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TauPrior:
    """Density of tau on ``[lo, hi]``, normalized there; ``lo == hi`` is a point mass."""

    kind: str
    lo: float
    hi: float
    log_pdf: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def __post_init__(self):
        if not 0 < self.lo <= self.hi <= 1:
            raise ValueError("support must satisfy 0 < lo <= hi <= 1, got [%r, %r]" % (self.lo, self.hi))

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def log_density(self, tau):
        tau = np.asarray(tau, dtype=float)
        inside = (tau >= self.lo) & (tau <= self.hi)
        out = np.full(tau.shape, -np.inf)
        out[inside] = self.log_pdf(tau[inside])
        return out

    def density(self, tau):
        return np.exp(self.log_density(tau))

    def mass(self, a: float, b: float) -> float:
        """Prior probability of [a, b]."""
        if self.is_point:
            return float(a <= self.lo <= b)
        a, b = max(a, self.lo), min(b, self.hi)
        if b <= a:
            return 0.0
        val, _ = integrate.quad(lambda t: float(self.density(t)), a, b, epsabs=0.0, epsrel=1e-12, limit=200)
        return val

    def mean(self) -> float:
        if self.is_point:
            return self.lo
        val, _ = integrate.quad(lambda t: t * float(self.density(t)), self.lo, self.hi,
                                epsabs=0.0, epsrel=1e-12, limit=200)
        return val


def truncated_half_cauchy(lo: float, hi: float = 1.0) -> TauPrior:
    """(arctan(hi) - arctan(lo))^(-1) (1 + tau^2)^(-1) on [lo, hi]."""
    log_c = -math.log(math.atan(hi) - math.atan(lo))
    return TauPrior("truncated-half-cauchy", lo, hi, lambda t: log_c - np.log1p(t * t))


def truncated_uniform(lo: float, hi: float = 1.0) -> TauPrior:
    log_c = -math.log(hi - lo)
    return TauPrior("truncated-uniform", lo, hi, lambda t: np.full(np.shape(t), log_c))


def tabulated(taus, density) -> TauPrior:
    """Piecewise-linear density through ``(taus, density)``, renormalized on [taus[0], taus[-1]]."""
    taus = np.asarray(taus, dtype=float)
    density = np.asarray(density, dtype=float)
    if taus.ndim != 1 or taus.size < 2 or np.any(np.diff(taus) <= 0):
        raise ValueError("taus must be strictly increasing with at least two nodes")
    if density.shape != taus.shape or np.any(density < 0) or not np.any(density > 0):
        raise ValueError("density must be non-negative, not identically zero, and match taus")
    total = float(np.sum(0.5 * (density[1:] + density[:-1]) * np.diff(taus)))
    dens = density / total

    def log_pdf(t):
        with np.errstate(divide="ignore"):
            return np.log(np.interp(t, taus, dens))

    return TauPrior("table", float(taus[0]), float(taus[-1]), log_pdf)


def point_mass(tau: float) -> TauPrior:
    return TauPrior("point", tau, tau, lambda t: np.zeros(np.shape(t)))


def testing_alpha(n: int, c_n: float | None = None) -> float:
    """Upper support end with log(1/alpha) = log n - (1/2) log log n + c_n; c_n defaults to log log log n."""
    if n <= math.e ** math.e:
        raise ValueError("schedule needs log log log n > 0, i.e. n > e^e")
    lln = math.log(math.log(n))
    if c_n is None:
        c_n = math.log(lln)
    alpha = math.exp(-(math.log(n) - 0.5 * lln + c_n))
    if not 1.0 / n < alpha < 1.0:
        raise ValueError("alpha_n = %g falls outside (1/n, 1) for n = %d" % (alpha, n))
    return alpha


def testing_uniform_prior(n: int, c_n: float | None = None) -> TauPrior:
    return truncated_uniform(1.0 / n, testing_alpha(n, c_n))


# ---------------------------------------------------------------------------
# prior mass near the oracle scale
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PriorMassParams:
    q_n: int
    n: int
    C_u: float = 1.0
    M1: float = 1.0
    c: float | None = None

    def __post_init__(self):
        if not (self.C_u > 0 and self.M1 >= 1):
            raise ValueError("need C_u > 0 and M1 >= 1")
        if not 0 < self.q_n < self.n:
            raise ValueError("need 0 < q_n < n")
        if self.c is not None and not 0 < self.c <= self.C_u / 2:
            raise ValueError("need 0 < c <= C_u / 2")

    @property
    def c_value(self) -> float:
        return self.C_u / 2 if self.c is None else self.c

    @property
    def tau_n(self) -> float:
        r = self.q_n / self.n
        return r * math.sqrt(math.log(1.0 / r))

    @property
    def t_n(self) -> float:
        return self.C_u * math.pi ** 1.5 * self.tau_n


@dataclass(frozen=True)
class PriorMassReport:
    applicable: bool
    satisfied: bool
    lhs: float
    rhs: float
    mass: float
    t_n: float
    params: PriorMassParams


def check_prior_mass(prior: TauPrior, params: PriorMassParams) -> PriorMassReport:
    """(q_n/n)^M1 * prior mass of [t_n/2, t_n] against e^(-c q_n).

    t_n = C_u pi^(3/2) (q_n/n) sqrt(log(n/q_n)).  The check is not applicable
    when [t_n/2, t_n] leaves the prior's support.
    """
    t_n = params.t_n
    rhs = math.exp(-params.c_value * params.q_n)
    if t_n / 2 < prior.lo or t_n > prior.hi:
        return PriorMassReport(False, False, math.nan, rhs, math.nan, t_n, params)
    mass = prior.mass(t_n / 2, t_n)
    lhs = (params.q_n / params.n) ** params.M1 * mass
    return PriorMassReport(True, lhs >= rhs, lhs, rhs, mass, t_n, params)


# ---------------------------------------------------------------------------
# marginal likelihood and the posterior of tau
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TauGridConfig:
    size: int = DEFAULT_TAU_GRID
    threads: int = 1

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("grid size must be >= 1")


def log_marginal_x_given_tau(x, tau: float, spec: PriorSpec, quad: QuadratureConfig = DEFAULT_QUAD):
    """log m_tau(x): density of X_i given tau after integrating out theta_i and lambda_i."""
    km = kappa_moments(x, tau, spec, quad)
    return log_marginal_from_norm(km.log_norm, x, tau, spec)


def tau_grid(prior: TauPrior, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Log-spaced nodes on the support and their log trapezoid weights for d tau."""
    if prior.is_point or size == 1:
        if not prior.is_point:
            raise ValueError("a single-node grid needs a point-mass prior")
        return np.array([prior.lo]), np.array([0.0])
    u = np.linspace(math.log(prior.lo), math.log(prior.hi), size)
    du = u[1] - u[0]
    cell = np.full(size, du)
    cell[[0, -1]] *= 0.5
    # d tau = tau d(log tau)
    return np.exp(u), np.log(cell) + u


@dataclass(frozen=True)
class TauPosterior:
    grid: np.ndarray
    log_weights: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def mean(self) -> float:
        return float(self.weights @ self.grid)


@dataclass(frozen=True)
class FullBayesFit:
    """Per-node kernel tables for one data vector; rows index tau nodes."""

    X: np.ndarray
    posterior: TauPosterior
    shrink: np.ndarray
    cond_var: np.ndarray

    @property
    def node_means(self) -> np.ndarray:
        return self.shrink * self.X[None, :]

    def posterior_mean(self) -> np.ndarray:
        return self.posterior.weights @ self.node_means

    def shrinkage_weight(self) -> np.ndarray:
        return self.posterior.weights @ self.shrink

    def posterior_variance(self) -> np.ndarray:
        """Law of total variance over tau: E[Var(theta | X, tau)] + Var[E(theta | X, tau)]."""
        p = self.posterior.weights
        mean = p @ self.node_means
        spread = p @ (self.node_means - mean[None, :]) ** 2
        return p @ self.cond_var + spread


def _normalize(log_w: np.ndarray) -> np.ndarray:
    top = float(np.max(log_w))
    if not np.isfinite(top):
        raise TauPosteriorError("every tau node has zero posterior weight (max log weight %r)" % top)
    return log_w - logsumexp(log_w)


def fit_full_bayes(X, prior: TauPrior, spec: PriorSpec, grid: TauGridConfig = TauGridConfig(),
                   quad: QuadratureConfig = DEFAULT_QUAD) -> FullBayesFit:
    """Evaluate the kernel on every (tau node, distinct x) pair and the posterior of tau."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 1 or X.size == 0:
        raise ValueError("X must be a non-empty vector")
    taus, log_cell = tau_grid(prior, grid.size)
    ux, inverse = np.unique(np.abs(X), return_inverse=True)

    def node(tau):
        km = kappa_moments(ux, tau, spec, quad)
        lm = log_marginal_from_norm(km.log_norm, ux, tau, spec)
        return km.w, km.w + ux * ux * km.var_kappa, lm

    if grid.threads > 1:
        with ThreadPoolExecutor(grid.threads) as pool:
            rows = list(pool.map(node, taus))
    else:
        rows = [node(t) for t in taus]
    shrink = np.array([r[0] for r in rows])[:, inverse]
    cond_var = np.array([r[1] for r in rows])[:, inverse]
    loglik = np.array([np.sum(r[2][inverse]) for r in rows])
    log_w = loglik + prior.log_density(taus) + log_cell
    post = TauPosterior(taus, _normalize(log_w))
    return FullBayesFit(X, post, shrink, cond_var)


def tau_posterior(X, prior: TauPrior, spec: PriorSpec, grid: TauGridConfig = TauGridConfig(),
                  quad: QuadratureConfig = DEFAULT_QUAD) -> TauPosterior:
    return fit_full_bayes(X, prior, spec, grid, quad).posterior


def fb_posterior_mean(X, prior: TauPrior, spec: PriorSpec, grid: TauGridConfig = TauGridConfig(),
                      quad: QuadratureConfig = DEFAULT_QUAD) -> np.ndarray:
    return fit_full_bayes(X, prior, spec, grid, quad).posterior_mean()


def fb_posterior_variance(X, prior: TauPrior, spec: PriorSpec, i: int,
                          grid: TauGridConfig = TauGridConfig(),
                          quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    return float(fit_full_bayes(X, prior, spec, grid, quad).posterior_variance()[i])


def fb_shrinkage_weight(X, prior: TauPrior, spec: PriorSpec, i: int,
                        grid: TauGridConfig = TauGridConfig(),
                        quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    return float(fit_full_bayes(X, prior, spec, grid, quad).shrinkage_weight()[i])


def fb_sample_theta(X, prior: TauPrior, spec: PriorSpec, rng: np.random.Generator, draws: int,
                    grid: TauGridConfig = TauGridConfig(), quad: QuadratureConfig = DEFAULT_QUAD,
                    *, fit: FullBayesFit | None = None) -> np.ndarray:
    """Joint posterior draws (draws x n): tau from the grid posterior, then theta given tau.

    Pass ``fit`` to reuse kernel tables already computed for ``X``.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    if fit is None:
        fit = fit_full_bayes(X, prior, spec, grid, quad)
    post = fit.posterior
    idx = rng.choice(post.grid.size, size=draws, p=post.weights / post.weights.sum())
    out = np.empty((draws, fit.X.size))
    for j in np.unique(idx):
        rows = np.nonzero(idx == j)[0]
        out[rows] = sample_theta_batch(fit.X, float(post.grid[j]), spec, rng, rows.size)
    return out
