"""Plug-in (empirical Bayes) estimate of the global scale and the estimators built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import DEFAULT_QUAD, QuadratureConfig, kappa_moments, sample_theta_batch
from .priors import PriorSpec


@dataclass(frozen=True)
class EBConfig:
    c1: float = 2.0
    c2: float = 1.0

    def __post_init__(self):
        if not self.c1 >= 2:
            raise ValueError("c1 must be >= 2, got %r" % (self.c1,))
        if not self.c2 >= 1:
            raise ValueError("c2 must be >= 1, got %r" % (self.c2,))


DEFAULT_EB = EBConfig()


def _as_data(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 1:
        raise ValueError("X must be one-dimensional")
    if X.size < 2:
        raise ValueError("need n >= 2 observations, got %d" % X.size)
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite")
    return X


def threshold(n: int, cfg: EBConfig = DEFAULT_EB) -> float:
    return math.sqrt(cfg.c1 * math.log(n))


def estimate_tau(X, cfg: EBConfig = DEFAULT_EB) -> float:
    """max{1/n, #{|X_i| > sqrt(c1 log n)} / (c2 n)}; always inside [1/n, 1]."""
    X = _as_data(X)
    n = X.size
    count = int(np.count_nonzero(np.abs(X) > threshold(n, cfg)))
    return max(1.0 / n, count / (cfg.c2 * n))


def eb_estimate(X, spec: PriorSpec, cfg: EBConfig = DEFAULT_EB,
                quad: QuadratureConfig = DEFAULT_QUAD) -> np.ndarray:
    """Posterior mean T_tau(X_i) at the plug-in tau, coordinatewise."""
    X = _as_data(X)
    tau = estimate_tau(X, cfg)
    return kappa_moments(X, tau, spec, quad).w * X


def _pairwise_sum(v: np.ndarray) -> float:
    # fixed-order pairwise reduction, independent of how the terms were computed
    v = np.asarray(v, dtype=float)
    while v.size > 1:
        if v.size % 2:
            v = np.append(v, 0.0)
        v = v[0::2] + v[1::2]
    return float(v[0]) if v.size else 0.0


def eb_posterior_variances(X, spec: PriorSpec, cfg: EBConfig = DEFAULT_EB,
                           quad: QuadratureConfig = DEFAULT_QUAD) -> np.ndarray:
    X = _as_data(X)
    mom = kappa_moments(X, estimate_tau(X, cfg), spec, quad)
    return mom.w + X * X * mom.var_kappa


def eb_total_posterior_variance(X, spec: PriorSpec, cfg: EBConfig = DEFAULT_EB,
                                quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Sum over coordinates of Var(theta_i | X_i, tau_hat)."""
    return _pairwise_sum(eb_posterior_variances(X, spec, cfg, quad))


def eb_sample(X, spec: PriorSpec, rng: np.random.Generator, draws: int,
              cfg: EBConfig = DEFAULT_EB) -> np.ndarray:
    """Joint draws (draws x n) from the plug-in posterior; coordinates are independent given tau."""
    X = _as_data(X)
    return sample_theta_batch(X, estimate_tau(X, cfg), spec, rng, draws)


def exceedance_probability(draws: np.ndarray, centre, radius: float) -> float:
    """Fraction of rows with ||theta - centre||^2 > radius."""
    sq = np.sum((draws - np.asarray(centre, dtype=float)[None, :]) ** 2, axis=1)
    return float(np.mean(sq > radius))


def eb_contraction_probability(X, theta0, radius: float, spec: PriorSpec, cfg: EBConfig,
                               rng: np.random.Generator, draws: int = 1000) -> float:
    """Monte Carlo estimate of the plug-in posterior mass of {||theta - theta0||^2 > radius}."""
    if draws < 1000:
        raise ValueError("draws must be >= 1000, got %d" % draws)
    if radius < 0:
        raise ValueError("radius must be non-negative")
    return exceedance_probability(eb_sample(X, spec, rng, draws, cfg), theta0, radius)
