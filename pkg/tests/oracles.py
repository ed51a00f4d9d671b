"""Independent reference computations for the tests.

None of these call into the package's quadrature.  They are slow and
brute-force on purpose.
"""

import math

import numpy as np
from scipy.special import logsumexp


def riemann_kappa(x, tau, log_L, a, K, nodes=10**6, span=150.0):
    """Posterior moments of kappa by a midpoint sum over u = logit(kappa).

    The density of kappa is written exactly as the prior change of variables
    gives it, times the likelihood sqrt(kappa) exp(-kappa x^2 / 2); the
    Jacobian d kappa = kappa (1 - kappa) du is included.  A uniform grid in
    kappa itself cannot resolve the spike of width tau^2 next to kappa = 1.

    Returns a dict per x with m1, w, m2, w2, var, log_norm (normalizer of
    kappa^(a-1/2) (1-kappa)^(-a-1) L(t) exp((1-kappa) x^2/2)).
    """
    h = 2 * span / nodes
    u = -span + (np.arange(nodes) + 0.5) * h
    log_k = -np.logaddexp(0.0, -u)
    log_1mk = -np.logaddexp(0.0, u)
    kappa = np.exp(log_k)
    t = np.exp(log_1mk - log_k) / tau ** 2
    base = (a - 0.5) * log_k - (a + 1) * log_1mk + log_L(t) + log_k + log_1mk
    out = []
    for xi in np.atleast_1d(x):
        x2 = float(xi) ** 2
        lf = base - kappa * x2 / 2
        z = logsumexp(lf)
        m1 = math.exp(logsumexp(lf + log_k) - z)
        w = math.exp(logsumexp(lf + log_1mk) - z)
        m2 = math.exp(logsumexp(lf + 2 * log_k) - z)
        w2 = math.exp(logsumexp(lf + 2 * log_1mk) - z)
        # central second moment computed directly, no cancellation
        vk = float(np.sum(np.exp(lf - z) * (kappa - m1) ** 2))
        out.append(dict(m1=m1, w=w, m2=m2, w2=w2, var_kappa=vk,
                        mean=w * float(xi), var=w + x2 * vk,
                        log_norm=z + math.log(h) + x2 / 2))
    return out


def riemann_log_mass(a, log_L, nodes=10**6, lo=-300.0, hi=300.0):
    """log int_0^inf t^(-a-1) L(t) dt by a midpoint sum in s = log t."""
    h = (hi - lo) / nodes
    s = lo + (np.arange(nodes) + 0.5) * h
    return float(logsumexp(-a * s + log_L(np.exp(s))) + math.log(h))


def normal_cdf_series(z, terms=200):
    """Phi(z) from the Maclaurin series of erf, summed with math.fsum."""
    x = z / math.sqrt(2.0)
    parts = []
    term = x
    for k in range(terms):
        parts.append(term / (2 * k + 1))
        term *= -x * x / (k + 1)
    return 0.5 + math.fsum(parts) / math.sqrt(math.pi)


def horseshoe_log_L(t):
    t = np.asarray(t, dtype=float)
    return np.log(t) - np.log1p(t)


def tpb_log_L(a, b):
    return lambda t: (a + b) * (np.log(t) - np.log1p(np.asarray(t, dtype=float)))
