"""Local-scale prior family pi(lambda^2) = K (lambda^2)^(-a-1) L(lambda^2).

Every slowly varying component ``L`` is carried in log form as a function of
``s = log t`` so that priors whose ``L`` vanishes polynomially at the origin
stay representable far into the tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

LogLFn = Callable[[np.ndarray], np.ndarray]

# certificate grid: 4096 log-spaced points on [1e-8, 1e8].
CERT_GRID_SIZE = 4096
CERT_GRID_RANGE = (1e-8, 1e8)
NORMALIZATION_RTOL = 1e-8


class AssumptionViolation(ValueError):
    """A prior fails one of its certificates; ``assumption`` names which."""

    def __init__(self, assumption: str, message: str, report: "ValidationReport | None" = None):
        super().__init__(f"{assumption}: {message}")
        self.assumption = assumption
        self.report = report


@dataclass(frozen=True)
class PriorSpec:
    """One member of the global-local family.

    ``log_l`` maps ``log t`` to ``log L(t)`` elementwise.  ``K`` normalizes
    ``t^(-a-1) L(t)`` to a density on (0, inf); ``M`` bounds ``L`` from above
    and ``L(t) >= c0`` for every ``t >= t0``.
    """

    a: float
    log_l: LogLFn = field(repr=False, compare=False)
    K: float
    M: float
    c0: float
    t0: float
    name: str
    params: tuple = ()

    def log_L(self, t):
        t = np.asarray(t, dtype=float)
        return self.log_l(np.log(t))

    def L(self, t):
        return np.exp(self.log_L(t))

    def log_density(self, t):
        """log of the normalized local-scale density K t^(-a-1) L(t)."""
        t = np.asarray(t, dtype=float)
        s = np.log(t)
        return math.log(self.K) - (self.a + 1.0) * s + self.log_l(s)

    def replace(self, **changes) -> "PriorSpec":
        fields = dict(a=self.a, log_l=self.log_l, K=self.K, M=self.M, c0=self.c0,
                      t0=self.t0, name=self.name, params=self.params)
        fields.update(changes)
        return PriorSpec(**fields)


# ---------------------------------------------------------------------------
# normalizing constant
# ---------------------------------------------------------------------------

def _log_mass_integrand(s: np.ndarray, a: float, log_l: LogLFn) -> np.ndarray:
    # t^(-a-1) L(t) dt with t = e^s  ->  e^(-a s) L(e^s) ds
    return -a * s + log_l(s)


def _integration_window(fn: Callable[[np.ndarray], np.ndarray], drop: float = 60.0,
                        step: float = 0.5, limit: float = 5000.0) -> tuple[float, float]:
    """Smallest lattice interval outside which ``fn`` sits ``drop`` nats below its max."""
    lo, hi = -40.0, 40.0
    while True:
        s = np.arange(lo, hi + step, step)
        f = fn(s)
        peak = np.max(f)
        inside = np.nonzero(f > peak - drop)[0]
        grow_lo = inside[0] <= 1
        grow_hi = inside[-1] >= s.size - 2
        if not (grow_lo or grow_hi):
            return s[inside[0]] - 2 * step, s[inside[-1]] + 2 * step
        if grow_lo:
            lo -= max(40.0, 0.5 * (hi - lo))
        if grow_hi:
            hi += max(40.0, 0.5 * (hi - lo))
        if hi - lo > limit:
            raise ValueError("integrand does not decay within |log t| <= %g" % limit)


def log_mass(a: float, log_l: LogLFn, rtol: float = 1e-12) -> float:
    """log of int_0^inf t^(-a-1) L(t) dt by log-domain trapezoid with step halving."""
    fn = lambda s: _log_mass_integrand(s, a, log_l)
    lo, hi = _integration_window(fn)
    h = 0.25
    prev = None
    while True:
        s = np.arange(math.floor(lo / h), math.ceil(hi / h) + 1) * h
        val = logsumexp(fn(s)) + math.log(h)
        if prev is not None and abs(val - prev) < rtol:
            return val
        prev = val
        h /= 2
        if h < 1e-4:
            return val


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def _certificates(log_l: LogLFn, t0: float = 1.0) -> tuple[float, float]:
    s = np.log(np.geomspace(*CERT_GRID_RANGE, CERT_GRID_SIZE))
    vals = np.exp(log_l(s))
    M = float(np.max(vals))
    c0 = float(np.min(vals[s >= math.log(t0)]))
    return M, c0


def make_prior(a: float, log_l: LogLFn, name: str, *, M: float | None = None,
               c0: float | None = None, t0: float = 1.0, params: tuple = ()) -> PriorSpec:
    """Build a spec from ``a`` and ``log L``; ``K`` is always computed.

    Omitted certificates are read off the 4096-point grid.  They are valid
    for the grid, not proven tight.
    """
    if not a > 0:
        raise ValueError("tail index a must be positive, got %r" % (a,))
    K = math.exp(-log_mass(a, log_l))
    grid_M, grid_c0 = _certificates(log_l, t0)
    return PriorSpec(a=float(a), log_l=log_l, K=K,
                     M=grid_M if M is None else float(M),
                     c0=grid_c0 if c0 is None else float(c0),
                     t0=float(t0), name=name, params=params)


def _log_t_over_1pt(s):
    # log(t/(1+t)) for t = e^s, stable on both tails
    return -np.logaddexp(0.0, -np.asarray(s, dtype=float))


def make_horseshoe() -> PriorSpec:
    """Horseshoe: a = 1/2, L(t) = t/(1+t), K = 1/pi."""
    spec = PriorSpec(a=0.5, log_l=_log_t_over_1pt, K=1.0 / math.pi, M=1.0,
                     c0=0.5, t0=1.0, name="horseshoe")
    computed = math.exp(-log_mass(0.5, _log_t_over_1pt))
    if abs(computed * math.pi - 1.0) > NORMALIZATION_RTOL:
        raise AssumptionViolation("normalization", "horseshoe K quadrature %r != 1/pi" % computed)
    return spec


def make_three_parameter_beta(a: float, b: float) -> PriorSpec:
    """Three-parameter beta normal: lambda^2 density proportional to (lambda^2)^(b-1) (1+lambda^2)^(-a-b)."""
    if not (a > 0 and b > 0):
        raise ValueError("tpb parameters must be positive, got a=%r, b=%r" % (a, b))
    a, b = float(a), float(b)
    expo = a + b

    def log_l(s):
        return expo * _log_t_over_1pt(s)

    return make_prior(a, log_l, "tpb(%g,%g)" % (a, b), M=1.0, c0=2.0 ** (-expo), t0=1.0,
                      params=(a, b))


_GDP_OFFSETS = np.arange(-40.0, 6.0 + 1e-12, 1.0 / 32.0)


def _gdp_log_variance_density(s: np.ndarray, alpha: float, eta: float) -> np.ndarray:
    """log density of the variance psi = lambda^2 under the GDP(alpha, eta) hierarchy.

    theta | psi ~ N(0, psi), psi | r ~ Exp(r^2/2), r ~ Gamma(alpha, eta); so
    p(psi) = eta^alpha / (2 Gamma(alpha)) int_0^inf r^(alpha+1) exp(-r^2 psi/2 - eta r) dr.
    The inner integral runs on a log-r lattice centred at the integrand's mode.
    """
    s = np.asarray(s, dtype=float)
    shape = s.shape
    t = np.exp(s.ravel())
    nu = alpha + 2.0
    mode = 2.0 * nu / (eta + np.sqrt(eta * eta + 4.0 * t * nu))
    out = np.empty_like(t)
    chunk = 2048
    for start in range(0, t.size, chunk):
        tt = t[start:start + chunk, None]
        u = np.log(mode[start:start + chunk, None]) + _GDP_OFFSETS[None, :]
        r = np.exp(u)
        logf = nu * u - 0.5 * tt * r * r - eta * r
        out[start:start + chunk] = logsumexp(logf, axis=1)
    out += math.log(_GDP_OFFSETS[1] - _GDP_OFFSETS[0])
    out += alpha * math.log(eta) - gammaln(alpha) - math.log(2.0)
    return out.reshape(shape)


def make_generalized_double_pareto(alpha: float = 1.0, eta: float = 1.0) -> PriorSpec:
    """Generalized double Pareto with shape ``alpha`` and scale ``eta``; tail index a = alpha/2.

    L is scaled so that L(inf) = 1; the variance density has no
    convenient closed form here, so it is integrated numerically.
    """
    if not (alpha > 0 and eta > 0):
        raise ValueError("gdp parameters must be positive, got alpha=%r, eta=%r" % (alpha, eta))
    alpha, eta = float(alpha), float(eta)
    a = alpha / 2.0
    # t^(a+1) p(t) -> eta^alpha 2^(alpha/2) Gamma(a+1) / (2 Gamma(alpha)) as t -> inf
    log_limit = (alpha * math.log(eta) + a * math.log(2.0) + gammaln(a + 1.0)
                 - math.log(2.0) - gammaln(alpha))

    def log_l(s):
        s = np.asarray(s, dtype=float)
        return _gdp_log_variance_density(s, alpha, eta) + (a + 1.0) * s - log_limit

    grid_M, _ = _certificates(log_l)
    return make_prior(a, log_l, "gdp(%g,%g)" % (alpha, eta), M=max(1.0, grid_M), t0=1.0,
                      params=(alpha, eta))


BUILTIN_PRIORS = ("horseshoe", "tpb", "gdp")


def prior_from_name(name: str, **params) -> PriorSpec:
    """Look up a built-in prior by name, e.g. ``prior_from_name("tpb", a=1, b=1)``."""
    key = name.lower()
    if key == "horseshoe":
        if params:
            raise ValueError("horseshoe takes no parameters")
        return make_horseshoe()
    if key in ("tpb", "three_parameter_beta"):
        return make_three_parameter_beta(params.get("a", 0.5), params.get("b", 0.5))
    if key in ("gdp", "generalized_double_pareto"):
        return make_generalized_double_pareto(params.get("alpha", 1.0), params.get("eta", 1.0))
    raise ValueError("unknown prior %r; built-ins are %s" % (name, ", ".join(BUILTIN_PRIORS)))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridConfig:
    size: int = CERT_GRID_SIZE
    lo: float = CERT_GRID_RANGE[0]
    hi: float = CERT_GRID_RANGE[1]

    def points(self) -> np.ndarray:
        return np.geomspace(self.lo, self.hi, self.size)


@dataclass(frozen=True)
class Check:
    assumption: str
    passed: bool
    margin: float
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    name: str
    checks: tuple[Check, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, assumption: str) -> Check:
        for c in self.checks:
            if c.assumption == assumption:
                return c
        raise KeyError(assumption)


def validate_spec(spec: PriorSpec, grid: GridConfig | None = None, *,
                  strict: bool = True) -> ValidationReport:
    """Check positivity, the upper bound M, the tail lower bound c0 and normalization on a log grid.

    Raises :class:`AssumptionViolation` naming the first failed check unless
    ``strict`` is false.
    """
    grid = grid or GridConfig()
    t = grid.points()
    log_vals = spec.log_L(t)
    vals = np.exp(log_vals)
    checks = []

    finite = np.isfinite(log_vals)
    checks.append(Check("positivity", bool(np.all(finite & (vals > 0))),
                        float(np.min(vals)) if np.all(finite) else -math.inf,
                        "min L on grid"))

    sup = float(np.max(vals))
    checks.append(Check("upper_bound", sup <= spec.M * (1.0 + 1e-9), spec.M - sup,
                        "sup L = %.12g vs M = %.12g" % (sup, spec.M)))

    tail = vals[t >= spec.t0]
    low = float(np.min(tail)) if tail.size else math.inf
    checks.append(Check("tail_lower_bound", low >= spec.c0, low - spec.c0,
                        "min L on t >= %g is %.12g vs c0 = %.12g" % (spec.t0, low, spec.c0)))

    ratio = spec.K * math.exp(log_mass(spec.a, spec.log_l))
    checks.append(Check("normalization", abs(ratio - 1.0) <= NORMALIZATION_RTOL, ratio - 1.0,
                        "K * integral = %.15g" % ratio))

    report = ValidationReport(spec.name, tuple(checks))
    if strict and not report.ok:
        bad = report.failures()[0]
        raise AssumptionViolation(bad.assumption, bad.detail, report)
    return report
