"""Analytical BER: symbol-by-symbol BER, union bound and genie-aided DF bound.

The union bound and the genie-aided bound are computed per CSI draw and
averaged over draws (hybrid analytical/Monte Carlo evaluation).
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import stats
from scipy.special import gammaincc, gammaln

from . import _kernels as kern
from .channel import Csi
from .detectors import CsiPrior

__all__ = [
    "BerPoint", "PartitionMeans", "regularized_q", "ss_ber_conditional",
    "average_ber", "draw_prior", "poisson_range", "pairwise_error_prob",
    "ms_union_bound", "union_bound_average", "genie_df_ber",
    "genie_df_average", "UnionBound",
]

DEFAULT_EPS = 1e-12
MAX_UNION_K = 12
# (N1, R) cells whose Poisson weight is below exp(this) for every draw are skipped
_MASK_LOG_FLOOR = math.log(1e-24)


@dataclass(frozen=True)
class BerPoint:
    """One BER value with its 95% confidence half-width."""

    snr: float
    detector: str
    ber: float
    half_width: float
    n_trials: int

    def __post_init__(self):
        if not (0.0 <= self.ber <= 1.0):
            raise ValueError(f"ber outside [0, 1]: {self.ber}")
        if self.half_width < 0:
            raise ValueError("half_width must be >= 0")


@dataclass(frozen=True)
class PartitionMeans:
    """Poisson means of the four position classes of a sequence pair.

    Classes: ones in both (``overlap`` positions), ones only in the
    transmitted sequence, ones only in the competitor, zeros in both.
    """

    lam1: float
    lam2: float
    lam3: float
    lam4: float
    overlap: int

    @classmethod
    def from_pair(cls, csi: Csi, K, n1, n1_hat, overlap):
        if not (0 <= overlap <= min(n1, n1_hat)) or K < max(n1, n1_hat):
            raise ValueError("inconsistent sequence-pair statistics")
        if K + overlap - n1 - n1_hat < 0:
            raise ValueError("inconsistent sequence-pair statistics")
        on = csi.mean_signal + csi.mean_noise
        cn = csi.mean_noise
        return cls(overlap * on, (n1 - overlap) * on, (n1_hat - overlap) * cn,
                   (K + overlap - n1 - n1_hat) * cn, overlap)


def regularized_q(a, y):
    """Upper regularized Gamma function ``Q(a, y)`` for integer ``a``.

    Equals ``Pr{Poisson(y) < a}``. ``a = 0`` returns 0 (an empty sum).
    """
    a = np.asarray(a)
    y = np.asarray(y, dtype=float)
    if np.any(a < 0) or np.any(y < 0):
        raise ValueError("need a >= 0 and y >= 0")
    a_f = np.maximum(a, 1).astype(float)
    q = np.where(a > 0, gammaincc(a_f, y), 0.0)
    return float(q) if q.ndim == 0 else q


def ss_ber_conditional(csi: Csi, xi) -> float:
    """BER of the rule "decide 1 iff r >= xi" for known CSI and equiprobable bits."""
    xi = np.asarray(xi)
    if np.any(xi < 0):
        raise ValueError("xi must be >= 0")
    cs, cn = csi.mean_signal, csi.mean_noise
    out = 0.5 + 0.5 * (regularized_q(xi, cs + cn) - regularized_q(xi, cn))
    return out


def _ss_ber_arrays(cs, cn, xi):
    return 0.5 + 0.5 * (regularized_q(xi, cs + cn) - regularized_q(xi, cn))


def draw_prior(prior: CsiPrior, n: int, rng):
    """Draw ``n`` CSI realizations ``(cs, cn)`` from a prior."""
    if prior.kind == "gamma":
        cs = rng.gamma(prior.signal.alpha, 1.0 / prior.signal.beta, n)
        cn = rng.gamma(prior.noise.alpha, 1.0 / prior.noise.beta, n)
    else:
        cs = prior.signal[rng.integers(prior.signal.size, size=n)]
        cn = prior.noise[rng.integers(prior.noise.size, size=n)]
    return cs, cn


def average_ber(conditional, prior: CsiPrior, n_mc: int, rng, snr=float("nan"),
                detector="analytic", vectorized=False) -> BerPoint:
    """Monte Carlo average of a conditional BER over the CSI prior.

    Parameters
    ----------
    conditional : callable
        ``conditional(csi)`` returning a BER, or ``conditional(cs, cn)`` on
        arrays when ``vectorized`` is true.
    prior : CsiPrior
    n_mc : int
        Number of CSI draws (ignored for a point-mass prior).
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    if prior.kind == "point":
        csi = Csi(float(prior.signal[0]), float(prior.noise[0]))
        v = conditional(np.array([csi.mean_signal]), np.array([csi.mean_noise]))[0] \
            if vectorized else conditional(csi)
        return BerPoint(snr, detector, float(v), 0.0, 1)
    cs, cn = draw_prior(prior, n_mc, rng)
    if vectorized:
        vals = np.asarray(conditional(cs, cn), dtype=float)
    else:
        vals = np.array([conditional(Csi(a, b)) for a, b in zip(cs, cn)])
    hw = 1.96 * vals.std(ddof=1) / math.sqrt(n_mc) if n_mc > 1 else 0.0
    return BerPoint(snr, detector, float(np.clip(vals.mean(), 0, 1)), float(hw), n_mc)


def poisson_range(lam: float, eps: float = DEFAULT_EPS):
    """Index range ``[lo, hi]`` holding all but ~``2 eps`` of a Poisson mass.

    The upper end is the tighter of ``lam + max(10, 12 sqrt(lam))`` and
    the point beyond which the tail is below ``eps``.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if lam <= 0:
        return 0, 0
    # mass below ppf(eps) is < eps
    lo = int(stats.poisson.ppf(eps, lam))
    hi = int(min(math.ceil(lam + max(10.0, 12.0 * math.sqrt(lam))),
                 stats.poisson.isf(eps, lam)))
    return lo, max(hi, lo)


def _pmf_on(lo, hi, lam):
    k = np.arange(lo, hi + 1)
    if lam <= 0:
        return (k == 0).astype(float)
    return stats.poisson.pmf(k, lam)


def _metric_grid(prior, n, K, xs, ys):
    # ln f(n, x, y) on the outer grid of xs (sum over ones) and ys (sum over zeros)
    t = prior.tables(K, int(xs.max() + ys.max()))
    out = np.empty((xs.size, ys.size))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            out[i, j] = kern.log_metric(t.LS, t.LN, t.lf, n, int(x), int(y), K, t.unimodal)
    return out


def pairwise_error_prob(csi: Csi, K, n1, n1_hat, overlap, prior: CsiPrior,
                        trunc_eps: float = DEFAULT_EPS) -> float:
    """Probability that a competitor out-scores the transmitted sequence.

    Sums the joint pmf of the four independent partition counts
    ``M1..M4`` over the truncated ranges, with ``N1 = M1 + M2``,
    ``N1_hat = M1 + M3`` and ``N = M1 + M2 + M3 + M4``.
    """
    if not trunc_eps > 0:
        raise ValueError("trunc_eps must be > 0")
    pm = PartitionMeans.from_pair(csi, K, n1, n1_hat, overlap)
    if n1 == n1_hat == overlap:
        return 0.0
    rng_ = [poisson_range(l, trunc_eps) for l in (pm.lam1, pm.lam2, pm.lam3, pm.lam4)]
    p = [_pmf_on(lo, hi, l) for (lo, hi), l in zip(rng_, (pm.lam1, pm.lam2, pm.lam3, pm.lam4))]
    m = [np.arange(lo, hi + 1) for lo, hi in rng_]
    M1, M2, M3, M4 = np.meshgrid(*m, indexing="ij")
    N1 = M1 + M2
    R = M3 + M4
    N1h = M1 + M3
    R_hat = M2 + M4
    g = _metric_grid(prior, n1, K, np.arange(N1.max() + 1), np.arange(R.max() + 1))
    gh = _metric_grid(prior, n1_hat, K, np.arange(N1h.max() + 1), np.arange(R_hat.max() + 1))
    ind = g[N1, R] < gh[N1h, R_hat]
    w = p[0][:, None, None, None] * p[1][None, :, None, None] \
        * p[2][None, None, :, None] * p[3][None, None, None, :]
    return float(np.sum(w * ind))


class UnionBound:
    """Per-draw union bound on the MS BER; ``value`` is clipped, ``raw`` is not."""

    def __init__(self, raw):
        self.raw_draws = np.asarray(raw, dtype=float)

    @property
    def raw(self) -> float:
        return float(self.raw_draws.mean())

    @property
    def value(self) -> float:
        return float(np.minimum(self.raw_draws, 1.0).mean())


def union_bound_average(cs, cn, K: int, prior: CsiPrior,
                        trunc_eps: float = DEFAULT_EPS) -> UnionBound:
    """Union bound on the K-symbol MS BER for each CSI draw ``(cs[m], cn[m])``.

    For a transmitted sequence with ``n1`` ones, the pairwise decision
    against any competitor only depends on the count total over the ones
    (``N1``) and over the zeros (``R``); given those, the competitor's
    statistic is a sum of two binomial thinnings. The Hamming-weighted sum
    over competitors is therefore a table in ``(N1, R)`` that does not
    depend on the CSI, and each draw only contributes its Poisson weights.
    """
    if K < 1 or K > MAX_UNION_K:
        raise ValueError(f"union bound supports 1 <= K <= {MAX_UNION_K}")
    cs = np.atleast_1d(np.asarray(cs, dtype=float))
    cn = np.atleast_1d(np.asarray(cn, dtype=float))
    lam_on = cs + cn
    raw = np.zeros(cs.size)
    lf_norm = gammaln(K + 1.0)
    for n1 in range(K + 1):
        w_seq = math.exp(lf_norm - gammaln(n1 + 1.0) - gammaln(K - n1 + 1.0) - K * math.log(2.0))
        r1 = [poisson_range(n1 * l, trunc_eps) for l in lam_on]
        r0 = [poisson_range((K - n1) * l, trunc_eps) for l in cn]
        lo1 = min(r[0] for r in r1)
        hi1 = max(r[1] for r in r1)
        hi0 = max(r[1] for r in r0)
        t = prior.tables(K, hi1 + hi0)
        mask = kern.joint_weight_mask(n1 * lam_on, (K - n1) * cn, lo1, hi1, hi0,
                                      _MASK_LOG_FLOOR, t.lf)
        H = kern.union_weight_table(t.LS, t.LN, t.lf, K, n1, lo1, hi1, hi0, t.unimodal, mask)
        for m in range(cs.size):
            p1 = _pmf_on(lo1, hi1, n1 * lam_on[m])
            p0 = _pmf_on(0, hi0, (K - n1) * cn[m])
            raw[m] += w_seq * float(p1 @ H @ p0) / K
    return UnionBound(raw)


def ms_union_bound(csi: Csi, K: int, prior: CsiPrior, trunc_eps: float = DEFAULT_EPS):
    """Union bound on the MS BER at fixed CSI.

    Returns
    -------
    value : float
        Bound clipped to [0, 1].
    raw : float
        Unclipped bound.
    """
    ub = union_bound_average([csi.mean_signal], [csi.mean_noise], K, prior, trunc_eps)
    return ub.value, ub.raw


def _zeros_mean(K, n, convention):
    if convention == "history":
        return K - 1 - n
    if convention == "printed":
        return K - n
    raise ValueError("convention must be 'history' or 'printed'")


def genie_df_average(cs, cn, K: int, prior: CsiPrior, trunc_eps: float = DEFAULT_EPS,
                     convention: str = "history") -> np.ndarray:
    """Genie-aided DF BER for each CSI draw (full window of K symbols).

    The history holds ``n`` ones out of ``K - 1`` past symbols with
    probability ``C(K-1, n) / 2^(K-1)``; its sums over ones and zeros are
    Poisson with means ``n (cs + cn)`` and ``Z cn``, where ``Z = K - 1 - n``
    (``convention="history"``) or ``Z = K - n`` (``"printed"``).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    cs = np.atleast_1d(np.asarray(cs, dtype=float))
    cn = np.atleast_1d(np.asarray(cn, dtype=float))
    lam_on = cs + cn
    out = np.zeros(cs.size)
    for n in range(K):
        w_hist = math.exp(gammaln(K) - gammaln(n + 1.0) - gammaln(K - n) - (K - 1) * math.log(2.0))
        Z = _zeros_mean(K, n, convention)
        r1 = [poisson_range(n * l, trunc_eps) for l in lam_on]
        r0 = [poisson_range(Z * l, trunc_eps) for l in cn]
        lo1 = min(r[0] for r in r1)
        hi1 = max(r[1] for r in r1)
        hi0 = max(r[1] for r in r0)
        base = prior.default_xi_max()
        t = prior.tables(K, hi1 + hi0 + max(base, 4 * (hi1 + hi0) + 10))
        grid = kern.df_threshold_grid(t.LS, t.LN, t.lf, n, K, lo1, hi1, hi0, base, t.unimodal)
        p1 = np.stack([_pmf_on(lo1, hi1, n * l) for l in lam_on])
        p0 = np.stack([_pmf_on(0, hi0, Z * l) for l in cn])
        lf = t.lf if t.lf.size > grid.max() + 2 else \
            gammaln(np.arange(grid.max() + 2) + 1.0)
        out += w_hist * kern.genie_accumulate(grid, p1, p0, lam_on, cn, lf)
    return out


def genie_df_ber(csi: Csi, K: int, prior: CsiPrior, trunc_eps: float = DEFAULT_EPS,
                 convention: str = "history") -> float:
    """Genie-aided DF BER at fixed CSI; lower-bounds the MS and DF BERs."""
    return float(genie_df_average([csi.mean_signal], [csi.mean_noise], K, prior,
                                  trunc_eps, convention)[0])
