"""Brute-force reference implementations used for validation.

Nothing here calls into the detector or analysis code: metrics are
evaluated directly from their definitions (plain log-sum-exp without
tables, windows or compiled kernels), sequence detection enumerates all
``2^K`` hypotheses and expectations are integrated numerically.
"""

from dataclasses import dataclass
import itertools
import math

import numpy as np
from scipy import integrate, stats
from scipy.special import gammaln, logsumexp

from .channel import Csi, ObservationBlock
from .csi_stats import GammaParams

__all__ = [
    "OracleConfig", "direct_log_metric", "exhaustive_ms_detect",
    "exhaustive_ms_scores", "exhaustive_pep", "quad_log_moment",
    "quad_metric_expectation", "quad_sequence_metric",
]


@dataclass(frozen=True)
class OracleConfig:
    max_K: int = 12
    max_count: int = 60
    quad_tol: float = 1e-11

    def __post_init__(self):
        if not (1 <= self.max_K <= 12):
            raise ValueError("max_K must be in 1..12")
        if self.max_count < 1 or not self.quad_tol > 0:
            raise ValueError("positive settings required")


def _gamma_logmom(p: GammaParams, a, b):
    return (gammaln(a + p.alpha) - gammaln(p.alpha) + p.alpha * np.log(p.beta)
            - (a + p.alpha) * np.log(b + p.beta))


def direct_log_metric(prior, n1, N1, N0, K) -> float:
    """``ln E{(c_s + c_n)^N1 c_n^N0 exp(-n1 c_s - K c_n)}`` from the definition.

    ``prior`` is a ``CsiPrior``; only its public ``kind``, ``signal`` and
    ``noise`` attributes are read. Point-mass and sample priors are
    evaluated without the binomial expansion. Gamma priors use the full
    expansion over the power of ``c_n``.
    """
    if prior.kind in ("point", "samples"):
        cs = np.asarray(prior.signal, dtype=float)
        cn = np.asarray(prior.noise, dtype=float)
        if prior.kind == "samples":
            # independent marginals: average over the product set
            cs, cn = np.meshgrid(cs, cn, indexing="ij")
            cs, cn = cs.ravel(), cn.ravel()
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(N1 == 0, 0.0, N1 * np.log(cs + cn))
            t0 = np.where(N0 == 0, 0.0, N0 * np.log(cn))
        v = t1 + t0 - n1 * cs - K * cn
        return float(logsumexp(v) - math.log(v.size))
    gs, gn = prior.signal, prior.noise
    i = np.arange(N1 + 1)
    # i is the power moved onto c_n
    lc = gammaln(N1 + 1.0) - gammaln(i + 1.0) - gammaln(N1 - i + 1.0)
    terms = lc + _gamma_logmom(gs, N1 - i, n1) + _gamma_logmom(gn, N0 + i, K)
    return float(logsumexp(terms))


def exhaustive_ms_scores(prior, r: ObservationBlock, config: OracleConfig = OracleConfig()):
    """Score every binary sequence.

    Returns
    -------
    best : ndarray of int8
        Maximizer; ties go to the lexicographically smallest sequence.
    gap : float
        Log-metric margin between the best and the runner-up sequence.
    """
    counts = np.asarray(r.counts)
    K = counts.size
    if K > config.max_K:
        raise ValueError(f"K = {K} exceeds max_K = {config.max_K}")
    cache = {}
    best, best_v, second = None, -np.inf, -np.inf
    total = int(counts.sum())
    # itertools.product yields sequences in lexicographic order
    for s in itertools.product((0, 1), repeat=K):
        sa = np.array(s, dtype=bool)
        key = (int(sa.sum()), int(counts[sa].sum()))
        if key not in cache:
            cache[key] = direct_log_metric(prior, key[0], key[1], total - key[1], K)
        v = cache[key]
        if v > best_v:
            best, best_v, second = sa, v, best_v
        elif v > second:
            second = v
    return best.astype(np.int8), best_v - second


def exhaustive_ms_detect(prior, r: ObservationBlock, config: OracleConfig = OracleConfig()):
    """Maximum-likelihood sequence by enumeration of all ``2^K`` candidates."""
    return exhaustive_ms_scores(prior, r, config)[0]


def exhaustive_pep(csi: Csi, K, s, s_hat, prior, max_count: int = None):
    """Pairwise error probability by enumeration of observation vectors.

    Returns
    -------
    pep : float
        Mass of ``{r in [0, max_count]^K : metric(s_hat) > metric(s)}``.
    tail : float
        Probability mass outside the enumerated box (error bar).
    """
    s = np.asarray(s, dtype=int)
    s_hat = np.asarray(s_hat, dtype=int)
    if s.size != K or s_hat.size != K:
        raise ValueError("sequence lengths must equal K")
    lam = csi.mean_signal * s + csi.mean_noise
    if max_count is None:
        top = float(lam.max())
        max_count = int(math.ceil(top + 12.0 * math.sqrt(top))) + 10
    grid = np.arange(max_count + 1)
    pmf = [stats.poisson.pmf(grid, l) if l > 0 else (grid == 0).astype(float) for l in lam]
    cache = {}

    def metric(bits, r):
        n1 = int(bits.sum())
        N1 = int(r[bits == 1].sum())
        key = (n1, N1, int(r.sum()) - N1)
        if key not in cache:
            cache[key] = direct_log_metric(prior, key[0], key[1], key[2], K)
        return cache[key]

    pep = 0.0
    for r in itertools.product(grid, repeat=K):
        r = np.array(r)
        if metric(s, r) < metric(s_hat, r):
            pep += float(np.prod([pmf[k][r[k]] for k in range(K)]))
    inside = float(np.prod([p.sum() for p in pmf]))
    return pep, max(1.0 - inside, 0.0)


def quad_log_moment(p: GammaParams, a, b, tol: float = 1e-11) -> float:
    """``ln E{x^a exp(-b x)}`` under ``Gamma(alpha, beta)`` by adaptive quadrature.

    The integrand ``x^(a+alpha-1) exp(-(b+beta) x)`` is rescaled by its
    maximum and split at the mode; an algebraic weight handles the
    singularity at 0 when ``a + alpha < 1``.
    """
    c = a + p.alpha - 1.0
    lam = b + p.beta
    if lam <= 0:
        raise ValueError("b + beta must be > 0")
    norm = p.alpha * math.log(p.beta) - gammaln(p.alpha)
    opts = dict(epsabs=0.0, epsrel=tol, limit=500)
    if c < 0:
        scale = 1.0 / lam
        i1, e1 = integrate.quad(lambda x: math.exp(-lam * x), 0.0, scale,
                                weight="alg", wvar=(c, 0.0), **opts)
        i2, e2 = integrate.quad(lambda x: x ** c * math.exp(-lam * x), scale, np.inf, **opts)
        val, err = i1 + i2, e1 + e2
        if err > 1e3 * tol * val:
            raise RuntimeError("quadrature did not converge")
        return math.log(val) + norm
    mode = c / lam
    g_star = (c * math.log(mode) if c > 0 else 0.0) - lam * mode
    sd = math.sqrt(max(c, 1.0)) / lam

    def f(x):
        if x <= 0:
            return 1.0 if (c == 0) else 0.0
        return math.exp(c * math.log(x) - lam * x - g_star)

    pieces = [0.0, mode] if mode > 0 else [0.0]
    edges = pieces + [mode + k * sd for k in (2, 8, 40)]
    val, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        v, e = integrate.quad(f, lo, hi, **opts)
        val += v
        err += e
    v, e = integrate.quad(f, edges[-1], np.inf, **opts)
    val += v
    err += e
    if not err <= 1e3 * tol * val + 1e-300:
        raise RuntimeError("quadrature did not converge")
    return math.log(val) + g_star + norm


def quad_metric_expectation(gamma_s: GammaParams, gamma_n: GammaParams, a_s, a_n,
                            b_s, b_n, tol: float = 1e-11) -> float:
    """Product of two weighted Gamma moments, each by 1-D quadrature."""
    return math.exp(quad_log_moment(gamma_s, a_s, b_s, tol)
                    + quad_log_moment(gamma_n, a_n, b_n, tol))


def quad_sequence_metric(gamma_s: GammaParams, gamma_n: GammaParams, n1, N1, N0, K,
                         tol: float = 1e-10) -> float:
    """``E{(c_s + c_n)^N1 c_n^N0 exp(-n1 c_s - K c_n)}`` by 2-D quadrature."""
    def pdf(p, x):
        return math.exp(p.alpha * math.log(p.beta) - gammaln(p.alpha)
                        + (p.alpha - 1.0) * math.log(x) - p.beta * x) if x > 0 else 0.0

    def integrand(cn, cs):
        return ((cs + cn) ** N1 * cn ** N0 * math.exp(-n1 * cs - K * cn)
                * pdf(gamma_s, cs) * pdf(gamma_n, cn))

    hi_s = gamma_s.mean + 60.0 * math.sqrt(gamma_s.variance) + 60.0
    hi_n = gamma_n.mean + 60.0 * math.sqrt(gamma_n.variance) + 60.0
    val, _ = integrate.dblquad(integrand, 0.0, hi_s, 0.0, hi_n, epsabs=0.0, epsrel=tol)
    return val
