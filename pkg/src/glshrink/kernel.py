"""Posterior of the shrinkage coefficient kappa = 1/(1 + lambda^2 tau^2) given (x, tau).

All integrals run over s = log t with t = lambda^2 = (1/tau^2)(1/kappa - 1).
Written in s, the unnormalized posterior of kappa (times e^(-x^2/2)) is

    h(s) = e^(-a s) L(e^s) (1 + e^s tau^2)^(-1/2) exp(-kappa(s) x^2 / 2)

which decays exponentially on both ends and is analytic in a strip, so a
plain trapezoid rule on a lattice converges geometrically.  Refinement is
checked by comparing the lattice against its every-other-node sublattice.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import expit, logsumexp

from .priors import PriorSpec

WINDOW_DROP = 40.0
MAX_NODES = 2 ** 20
CDF_CELLS = 4096
_ROW_CHUNK = 1024


class QuadratureError(RuntimeError):
    """Lattice refinement did not reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__("%s (achieved relative error %.3g)" % (message, achieved))
        self.achieved = achieved


class DegenerateCDFWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    node_count: int = 256
    split_points: tuple[float, ...] = ()
    relative_tolerance: float = 1e-9
    initial_step: float = 0.25

    def __post_init__(self):
        if self.node_count < 64:
            raise ValueError("node_count must be >= 64")
        if not 0 < self.relative_tolerance <= 1e-8:
            raise ValueError("relative_tolerance must lie in (0, 1e-8]")
        if any(not 0 < p < 1 for p in self.split_points):
            raise ValueError("split_points must lie in (0, 1)")


DEFAULT_QUAD = QuadratureConfig()


@dataclass(frozen=True)
class KappaMoments:
    """Posterior moments of kappa for one or many x at a single tau.

    Fields are scalars for scalar ``x`` and arrays otherwise.  ``w`` and
    ``w2`` are integrated directly (not as 1 - m1) so they keep full relative
    precision when the posterior piles up at kappa = 1.
    """

    m1: np.ndarray
    m2: np.ndarray
    w: np.ndarray
    w2: np.ndarray
    log_norm: np.ndarray
    var_kappa: np.ndarray = field(repr=False)
    nodes: int = field(default=0, repr=False)


def log_marginal_from_norm(log_norm, x, tau: float, spec: PriorSpec):
    """log m_tau(x), the density of X given tau, from ``KappaMoments.log_norm``."""
    x = np.asarray(x, dtype=float)
    return (math.log(spec.K) - 0.5 * math.log(2 * math.pi) + log_norm
            + spec.a * _log_tau2(tau) - 0.5 * x * x)


def _log_tau2(tau: float) -> float:
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1], got %r" % (tau,))
    return 2.0 * math.log(tau)


def _base(s: np.ndarray, r: np.ndarray, spec: PriorSpec) -> np.ndarray:
    # log of e^(-a s) L(e^s) (1 + t tau^2)^(-1/2); r = log(t tau^2)
    return -spec.a * s + spec.log_l(s) - 0.5 * np.logaddexp(0.0, r)


def _log_kappa(r):
    return -np.logaddexp(0.0, r)


def _log_omega(r):
    return -np.logaddexp(0.0, -r)


def _window(tau: float, spec: PriorSpec, x2_probe: np.ndarray,
            drop: float = WINDOW_DROP, step: float = 0.5) -> tuple[float, float]:
    """s-interval outside which every moment integrand is ``drop`` nats below its own peak."""
    lt2 = _log_tau2(tau)
    centre = -lt2
    lo, hi = min(-30.0, centre - 30.0), max(30.0, centre + 30.0)
    while True:
        s = np.arange(math.floor(lo / step), math.ceil(hi / step) + 1) * step
        r = s + lt2
        base = _base(s, r, spec)
        kap = expit(-r)
        lk, lw = _log_kappa(r), _log_omega(r)
        first, last = s.size, -1
        for x2 in x2_probe:
            lh = base - 0.5 * x2 * kap
            for extra in (0.0, lw, 2 * lw, lk, 2 * lk):
                f = lh + extra
                idx = np.nonzero(f > np.max(f) - drop)[0]
                first, last = min(first, idx[0]), max(last, idx[-1])
        grow_lo, grow_hi = first <= 1, last >= s.size - 2
        if not (grow_lo or grow_hi):
            return float(s[first] - 2 * step), float(s[last] + 2 * step)
        width = hi - lo
        if width > 1e4:
            raise QuadratureError("posterior of kappa does not decay in log t", math.inf)
        if grow_lo:
            lo -= max(30.0, 0.5 * width)
        if grow_hi:
            hi += max(30.0, 0.5 * width)


def _probe(x2: np.ndarray) -> np.ndarray:
    top = float(np.max(x2)) if x2.size else 0.0
    return np.unique(np.array([0.0, top / 16.0, top / 4.0, top]))


def _split_lattice(lo: float, hi: float, h: float) -> tuple[np.ndarray, int]:
    """Lattice nodes ordered even-index first, so ``s[:n_even]`` is the 2h sublattice."""
    k = np.arange(math.floor(lo / h), math.ceil(hi / h) + 1)
    even = k % 2 == 0
    return np.concatenate([k[even], k[~even]]) * h, int(even.sum())


def _moments_on_lattice(x2: np.ndarray, s: np.ndarray, n_even: int, lt2: float,
                        spec: PriorSpec, h: float) -> np.ndarray:
    """Rows: log_norm, m1, m2, w, w2, var_kappa, refinement discrepancy."""
    r = s + lt2
    base = _base(s, r, spec)
    # exp(-x^2 kappa/2) <= 1, so the x-free peak is a safe shift for every row
    shift = float(np.max(base))
    base = base - shift
    kap = expit(-r)
    om = expit(r)
    cols = np.stack([np.ones_like(kap), kap, om, kap * kap, om * om], axis=1)
    out = np.empty((7, x2.size))
    neg_half_kap = -0.5 * kap
    for start in range(0, x2.size, _ROW_CHUNK):
        sl = slice(start, start + _ROW_CHUNK)
        p = np.multiply.outer(x2[sl], neg_half_kap)
        p += base
        row_shift = np.zeros(p.shape[0])
        low = p.max(axis=1) < -600.0  # only for |x| in the hundreds
        if np.any(low):
            row_shift[low] = p[low].max(axis=1)
            p[low] -= row_shift[low, None]
        np.exp(p, out=p)
        even = p[:, :n_even] @ cols[:n_even]
        fine = even + p[:, n_even:] @ cols[n_even:]
        z = fine[:, 0]
        m1, w, m2, w2 = (fine[:, j] / z for j in range(1, 5))
        # Var(kappa) = Var(1 - kappa); difference the moment that is not near 1
        vk = np.where(w < 0.5, w2 - w * w, m2 - m1 * m1)
        coarse = even / even[:, :1]
        diff = np.maximum.reduce([
            np.abs(np.log(2.0 * even[:, 0] / z)),
            np.abs(coarse[:, 1] - m1) / m1,
            np.abs(coarse[:, 2] - w) / w,
        ])
        out[:, sl] = np.vstack([shift + row_shift + np.log(z * h), m1, m2, w, w2, np.maximum(vk, 0.0), diff])
    return out


def _accepts(diff: float, tol: float) -> bool:
    # trapezoid error on an analytic integrand falls like exp(-c/h), so the
    # error at step h is about the square of the h-vs-2h discrepancy
    return diff < 1e-2 and 10.0 * diff * diff <= tol


def kappa_moments(x, tau: float, spec: PriorSpec, cfg: QuadratureConfig = DEFAULT_QUAD) -> KappaMoments:
    """Posterior moments of kappa at every entry of ``x`` for one ``tau``.

    ``log_norm`` is the log of int_0^1 of the unnormalized kappa density
    (see :func:`kappa_log_density_unnormalized`).  It is assembled from the
    t-domain integral, so it stays finite even where e^(x^2/2) overflows.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    x2 = (x * x).ravel()
    lt2 = _log_tau2(tau)
    ux2, inverse = np.unique(x2, return_inverse=True)
    lo, hi = _window(tau, spec, _probe(ux2))
    for kap in cfg.split_points:
        s_k = math.log1p(-kap) - math.log(kap) - lt2
        lo, hi = min(lo, s_k - 1.0), max(hi, s_k + 1.0)
    h = cfg.initial_step
    achieved = math.inf
    while True:
        s, n_even = _split_lattice(lo, hi, h)
        if s.size > MAX_NODES:
            raise QuadratureError("lattice exceeded %d nodes" % MAX_NODES, achieved)
        res = _moments_on_lattice(ux2, s, n_even, lt2, spec, h)
        diff = float(np.max(res[6]))
        achieved = 10.0 * diff * diff
        if _accepts(diff, cfg.relative_tolerance):
            break
        h /= 2.0
    # t-domain normalizer -> normalizer of the kappa density as written in kappa_log_density_unnormalized
    res[0] += -spec.a * lt2 + 0.5 * ux2
    vals = [v[inverse].reshape(x.shape) for v in res[:6]]
    if scalar:
        vals = [float(v[0]) for v in vals]
    return KappaMoments(m1=vals[1], m2=vals[2], w=vals[3], w2=vals[4], log_norm=vals[0],
                        var_kappa=vals[5], nodes=int(s.size))


def kappa_log_density_unnormalized(kappa: float, x: float, tau: float, spec: PriorSpec) -> float:
    """log of kappa^(a-1/2) (1-kappa)^(-a-1) L((1/tau^2)(1/kappa - 1)) exp((1-kappa) x^2/2)."""
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie strictly inside (0, 1), got %r" % (kappa,))
    log_t = math.log1p(-kappa) - math.log(kappa) - _log_tau2(tau)
    return float((spec.a - 0.5) * math.log(kappa) - (spec.a + 1.0) * math.log1p(-kappa)
                 + spec.log_l(np.array(log_t)) + (1.0 - kappa) * x * x / 2.0)


def posterior_mean_theta(x, tau: float, spec: PriorSpec, cfg: QuadratureConfig = DEFAULT_QUAD):
    """T_tau(x) = E(1 - kappa | x, tau) x."""
    mom = kappa_moments(x, tau, spec, cfg)
    return mom.w * (float(x) if np.ndim(x) == 0 else np.asarray(x, dtype=float))


def posterior_var_theta(x, tau: float, spec: PriorSpec, cfg: QuadratureConfig = DEFAULT_QUAD):
    """Var(theta | x, tau) = E(1-kappa) + x^2 Var(kappa), from theta | kappa ~ N((1-kappa)x, 1-kappa)."""
    mom = kappa_moments(x, tau, spec, cfg)
    x = float(x) if np.ndim(x) == 0 else np.asarray(x, dtype=float)
    return mom.w + x * x * mom.var_kappa


def shrinkage_weight(x, tau: float, spec: PriorSpec, cfg: QuadratureConfig = DEFAULT_QUAD):
    return kappa_moments(x, tau, spec, cfg).w


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _kappa_cdf_tables(x2: np.ndarray, tau: float, spec: PriorSpec, cells: int = CDF_CELLS):
    lt2 = _log_tau2(tau)
    lo, hi = _window(tau, spec, _probe(x2))
    edges = np.linspace(lo, hi, cells + 1)
    r = edges + lt2
    base = _base(edges, r, spec)
    kap = expit(-r)
    lh = base[None, :] - 0.5 * x2[:, None] * kap[None, :]
    lh -= lh.max(axis=1, keepdims=True)
    dens = np.exp(lh)
    mass = 0.5 * (dens[:, 1:] + dens[:, :-1])
    live = np.count_nonzero(mass > 0, axis=1)
    cdf = np.zeros((x2.size, cells + 1))
    np.cumsum(mass, axis=1, out=cdf[:, 1:])
    cdf /= cdf[:, -1:]
    return edges, cdf, live


def _invert_rows(edges: np.ndarray, cdf: np.ndarray, u: np.ndarray, live: np.ndarray) -> np.ndarray:
    """Invert the piecewise-linear CDF of each row of ``cdf`` at the matching column of ``u``.

    ``u`` has shape (count, rows).  The cell holding u is the first k with
    cdf[k] >= u, so zero-mass cells are never selected and ties go to the
    lower cell.  A row whose mass sits in a single cell returns that cell's
    midpoint and raises :class:`DegenerateCDFWarning`.
    """
    rows, width = cdf.shape
    # rows are made globally monotone by offsetting row j by 2j
    offset = 2.0 * np.arange(rows)
    flat = (cdf + offset[:, None]).ravel()
    k = np.searchsorted(flat, u + offset[None, :], side="left") - np.arange(rows)[None, :] * width
    k = np.clip(k, 1, width - 1)
    col = np.arange(rows)[None, :]
    c0, c1 = cdf[col, k - 1], cdf[col, k]
    frac = np.clip((u - c0) / np.where(c1 > c0, c1 - c0, 1.0), 0.0, 1.0)
    out = edges[k - 1] + frac * (edges[k] - edges[k - 1])
    flat_rows = np.nonzero(live <= 1)[0]
    if flat_rows.size:
        warnings.warn("posterior of kappa concentrated in one cell; using its midpoint",
                      DegenerateCDFWarning, stacklevel=3)
        for j in flat_rows:
            cell = int(np.argmax(np.diff(cdf[j])))
            out[:, j] = 0.5 * (edges[cell] + edges[cell + 1])
    return out


def _theta_from_s(s: np.ndarray, x, lt2: float, rng: np.random.Generator) -> np.ndarray:
    om = expit(s + lt2)
    return om * x + np.sqrt(om) * rng.standard_normal(s.shape)


def sample_theta(x: float, tau: float, spec: PriorSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` values from the posterior of theta given (x, tau)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    x = float(x)
    edges, cdf, live = _kappa_cdf_tables(np.array([x * x]), tau, spec)
    s = _invert_rows(edges, cdf, rng.random((count, 1)), live)[:, 0]
    return _theta_from_s(s, x, _log_tau2(tau), rng)


def sample_theta_batch(xs, tau: float, spec: PriorSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    """Independent posterior draws for every coordinate of ``xs``; shape (count, len(xs))."""
    xs = np.asarray(xs, dtype=float)
    out = np.empty((count, xs.size))
    lt2 = _log_tau2(tau)
    for start in range(0, xs.size, _ROW_CHUNK):
        block = xs[start:start + _ROW_CHUNK]
        edges, cdf, live = _kappa_cdf_tables(block * block, tau, spec)
        s = _invert_rows(edges, cdf, rng.random((count, block.size)), live)
        out[:, start:start + block.size] = _theta_from_s(s, block[None, :], lt2, rng)
    return out


# ---------------------------------------------------------------------------
# proof-level bounds used as test oracles
# ---------------------------------------------------------------------------

def shrinkage_weight_upper_bound(x: float, tau: float, spec: PriorSpec) -> float:
    """tau^2 e^(x^2/4) + K int_1^inf [t tau^2/(1+t tau^2)] (1+t tau^2)^(-1/2) t^(-a-1) L(t) e^((x^2/2) t tau^2/(1+t tau^2)) dt.

    Valid for a >= 1; the second integral is taken over s = log t in [0, inf).
    """
    if spec.a < 1:
        raise ValueError("the bound requires a >= 1, got a=%r" % (spec.a,))
    lt2 = _log_tau2(tau)
    if tau >= 1:
        raise ValueError("tau must lie in (0, 1)")
    x2 = float(x) ** 2

    def log_f(s):
        s = np.asarray(s, dtype=float)
        r = s + lt2
        return (_log_omega(r) - 0.5 * np.logaddexp(0.0, r) - spec.a * s + spec.log_l(s)
                + 0.5 * x2 * expit(r))

    probe = np.linspace(0.0, -lt2 + 200.0, 4001)
    peak = float(np.max(log_f(probe)))
    val, _ = integrate.quad(lambda s: math.exp(float(log_f(s)) - peak), 0.0, np.inf,
                            limit=400, epsabs=0.0, epsrel=1e-11)
    second = math.log(spec.K) + peak + math.log(val)
    first = lt2 + x2 / 4.0
    return float(math.exp(np.logaddexp(first, second)))


def small_tau_weight_bound(x, tau: float, spec: PriorSpec):
    """K M / (a (1-a)) tau^(2a) e^(x^2/2), the small-tau envelope for E(1-kappa) when a < 1."""
    a = spec.a
    if not 0 < a < 1:
        raise ValueError("the envelope requires 0 < a < 1")
    x = np.asarray(x, dtype=float)
    return spec.K * spec.M / (a * (1.0 - a)) * tau ** (2 * a) * np.exp(x * x / 2.0)
