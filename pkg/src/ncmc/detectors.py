"""Detection rules for OOK over the Poisson channel.

Non-coherent detectors only know the distribution of the CSI, represented
by a :class:`CsiPrior`. Every non-coherent metric reduces to the quantity

    ln E{(c_s + c_n)^N1 c_n^N0 exp(-n1 c_s - K c_n)}

which depends on the observation only through ``(n1, N1, N0)`` and the
window length ``K``. Expanding the binomial gives a sum of products of
one-dimensional weighted moments ``E{x^a exp(-b x)}``, tabulated once per
prior in log scale.
"""

from collections import deque
from dataclasses import dataclass
import math
import threading

import numpy as np
from scipy.special import gammaln

from . import _kernels as kern
from .channel import Csi, ObservationBlock
from .csi_stats import GammaParams

__all__ = [
    "CsiPrior", "MetricTables", "MsMetricInputs", "DfState",
    "coherent_threshold", "ms_log_metric", "ms_zeta", "ms_detect",
    "ms_detect_windows", "ss_threshold", "df_threshold", "df_detect_stream",
    "df_detect_batch", "blind_detect", "blind_detect_windows",
]

BLIND_NOISE_FLOOR = 1e-3


class MetricTables:
    """Log-moment tables of a prior, grown on demand.

    ``LS[b, a] = ln E{c_s^a e^{-b c_s}}`` and ``LN[b, a] = ln E{c_n^a e^{-b c_n}}``
    for integer ``b`` (ones-count or window length) and power ``a``;
    ``lf[a] = ln a!``.
    """

    def __init__(self, log_moment_s, log_moment_n, unimodal):
        self._ms = log_moment_s
        self._mn = log_moment_n
        self.unimodal = unimodal
        self.max_b = -1
        self.max_a = -1
        self.LS = self.LN = self.lf = None
        self._lock = threading.Lock()

    def ensure(self, max_b: int, max_a: int):
        if max_b <= self.max_b and max_a <= self.max_a:
            return self
        with self._lock:
            return self._grow(max_b, max_a)

    def _grow(self, max_b, max_a):
        if max_b <= self.max_b and max_a <= self.max_a:
            return self
        nb = max(max_b, self.max_b, 1)
        na = max(max_a, self.max_a, 64)
        if na > self.max_a and self.max_a > 0:
            na = max(na, 2 * self.max_a)
        b = np.arange(nb + 1, dtype=float)
        a = np.arange(na + 1, dtype=float)
        # sizes are published last so readers never see a short table
        self.LS = np.ascontiguousarray(self._ms(a, b))
        self.LN = np.ascontiguousarray(self._mn(a, b))
        self.lf = gammaln(a + 1.0)
        self.max_b, self.max_a = nb, na
        return self


def _gamma_table(p: GammaParams):
    def f(a, b):
        return (gammaln(a[None, :] + p.alpha) - gammaln(p.alpha)
                + p.alpha * math.log(p.beta)
                - (a[None, :] + p.alpha) * np.log(b[:, None] + p.beta))
    return f


def _sample_table(x):
    x = np.ascontiguousarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        lx = np.log(x)

    def f(a, b):
        return kern.sample_log_moments(x, lx, np.asarray(a, float), np.asarray(b, float))
    return f


class CsiPrior:
    """Statistical CSI available to a non-coherent receiver.

    Build with :meth:`gamma`, :meth:`from_samples` or :meth:`point_mass`.
    Signal and noise means are modelled as independent.
    """

    def __init__(self, kind, signal, noise):
        self.kind = kind
        self.signal = signal
        self.noise = noise
        if kind == "gamma":
            ms, mn = _gamma_table(signal), _gamma_table(noise)
            unimodal = signal.alpha >= 1.0 and noise.alpha >= 1.0
        else:
            ms, mn = _sample_table(signal), _sample_table(noise)
            # binomial-type terms are log-concave in the split index when
            # the CSI is known; sample mixtures give no such guarantee
            unimodal = kind == "point" and noise[0] > 0
        self._tables = MetricTables(ms, mn, unimodal)

    @classmethod
    def gamma(cls, signal: GammaParams, noise: GammaParams) -> "CsiPrior":
        return cls("gamma", signal, noise)

    @classmethod
    def from_samples(cls, signal_samples, noise_samples) -> "CsiPrior":
        s = np.asarray(signal_samples, dtype=float).ravel()
        n = np.asarray(noise_samples, dtype=float).ravel()
        if s.size == 0 or n.size == 0:
            raise ValueError("sample sets must be non-empty")
        if np.any(s < 0) or np.any(n < 0) or not (np.all(np.isfinite(s)) and np.all(np.isfinite(n))):
            raise ValueError("samples must be finite and non-negative")
        return cls("samples", s, n)

    @classmethod
    def point_mass(cls, csi: Csi) -> "CsiPrior":
        return cls("point", np.array([csi.mean_signal]), np.array([csi.mean_noise]))

    @property
    def is_log_concave(self) -> bool:
        """Whether the binomial expansion terms are unimodal in the split index."""
        return self._tables.unimodal

    def mean(self):
        """Prior means of (c_s, c_n)."""
        if self.kind == "gamma":
            return self.signal.mean, self.noise.mean
        return float(self.signal.mean()), float(self.noise.mean())

    def default_xi_max(self) -> int:
        ms, mn = self.mean()
        return max(1, int(math.ceil(20.0 * (ms + mn))))

    def tables(self, max_b: int, max_a: int) -> MetricTables:
        return self._tables.ensure(int(max_b), int(max_a))

    def __repr__(self):
        if self.kind == "gamma":
            return f"CsiPrior.gamma({self.signal}, {self.noise})"
        if self.kind == "point":
            return f"CsiPrior.point_mass(({self.signal[0]}, {self.noise[0]}))"
        return f"CsiPrior.from_samples(<{self.signal.size}>, <{self.noise.size}>)"


@dataclass(frozen=True)
class MsMetricInputs:
    """Sufficient statistics of a hypothesis: ones-count, sums over ones/zeros, window."""

    n1: int
    N1: int
    N0: int
    K: int

    def __post_init__(self):
        if not (0 <= self.n1 <= self.K):
            raise ValueError("need 0 <= n1 <= K")
        if self.N1 < 0 or self.N0 < 0:
            raise ValueError("count sums must be non-negative")
        if self.n1 == 0 and self.N1 != 0:
            raise ValueError("N1 must be 0 when n1 = 0")


def coherent_threshold(csi: Csi) -> float:
    """ML threshold with known CSI: decide 1 iff ``r >= c_s / ln(1 + c_s/c_n)``."""
    cs, cn = csi.mean_signal, csi.mean_noise
    if cn <= 0:
        raise ValueError("coherent threshold is singular for zero noise")
    if cs <= 0:
        raise ValueError("coherent threshold needs a positive signal")
    return cs / math.log1p(cs / cn)


def ms_log_metric(prior: CsiPrior, m: MsMetricInputs) -> float:
    """Log of the non-coherent sequence likelihood (up to ``prod r[k]!``)."""
    t = prior.tables(m.K, m.N1 + m.N0)
    return float(kern.log_metric(t.LS, t.LN, t.lf, m.n1, m.N1, m.N0, m.K, t.unimodal))


def _as_rows(counts):
    c = np.asarray(counts)
    if c.ndim == 1:
        c = c[None, :]
    if np.any(c < 0):
        raise ValueError("counts must be non-negative")
    return np.ascontiguousarray(c, dtype=np.int64)


def ms_zeta(prior: CsiPrior, counts) -> np.ndarray:
    """Number of ones chosen by the MS detector for each row of ``counts``."""
    c = _as_rows(counts)
    K = c.shape[1]
    order = np.argsort(-c, axis=1, kind="stable")
    srt = np.ascontiguousarray(np.take_along_axis(c, order, axis=1))
    t = prior.tables(K, int(c.sum(axis=1).max()))
    return kern.ms_zeta(t.LS, t.LN, t.lf, srt, K, t.unimodal)


def ms_detect_windows(prior: CsiPrior, counts) -> np.ndarray:
    """Joint detection of each row of ``counts`` (one window per row).

    The ones go to the ``zeta`` largest counts, equal counts being ranked
    by position (earlier first).
    """
    c = _as_rows(counts)
    K = c.shape[1]
    order = np.argsort(-c, axis=1, kind="stable")
    zeta = ms_zeta(prior, c)
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(K)[None, :].repeat(c.shape[0], 0), axis=1)
    return (ranks < zeta[:, None]).astype(np.int8)


def ms_detect(prior: CsiPrior, r: ObservationBlock) -> np.ndarray:
    """Optimal non-coherent multiple-symbol detection of one block."""
    return ms_detect_windows(prior, r.counts)[0]


def ss_threshold(prior: CsiPrior, xi_max: int = None) -> int:
    """Symbol-by-symbol threshold: decide 1 iff ``r >= xi``.

    Raises
    ------
    RuntimeError
        If no threshold up to ``xi_max`` satisfies the decision condition.
    """
    return df_threshold(prior, DfState(1), 1, xi_max)


class DfState:
    """Last ``K - 1`` decisions and their counts for decision feedback."""

    def __init__(self, K: int, bits=(), counts=()):
        if K < 1:
            raise ValueError("K must be >= 1")
        self.K = K
        self._bits = deque(maxlen=K - 1) if K > 1 else deque(maxlen=0)
        self._counts = deque(maxlen=K - 1) if K > 1 else deque(maxlen=0)
        for b, c in zip(bits, counts):
            self.push(b, c)

    def push(self, bit, count):
        if self.K > 1:
            self._bits.append(int(bit))
            self._counts.append(int(count))

    def __len__(self):
        return len(self._bits)

    @property
    def stats(self):
        """``(n, N1, N0)`` over the stored history."""
        n = sum(self._bits)
        N1 = sum(c for b, c in zip(self._bits, self._counts) if b)
        N0 = sum(c for b, c in zip(self._bits, self._counts) if not b)
        return n, N1, N0


def _df_cap(prior, N1h, N0h, xi_max):
    base = prior.default_xi_max() if xi_max is None else int(xi_max)
    if base < 1:
        raise ValueError("xi_max must be >= 1")
    if N1h + N0h > 0:
        # a long history can push the crossover past the prior-based cap
        base = max(base, 4 * (N1h + N0h) + 10)
    return base


def df_threshold(prior: CsiPrior, state: DfState, K: int, xi_max: int = None) -> int:
    """Adaptive decision-feedback threshold for the current symbol.

    The window used is the current history plus the new symbol (shorter
    than ``K`` during warm-up).
    """
    n, N1h, N0h = state.stats
    Kw = len(state) + 1
    if Kw > K:
        raise ValueError("history longer than K - 1")
    cap = _df_cap(prior, N1h, N0h, xi_max)
    t = prior.tables(Kw, N1h + N0h + cap)
    xi = kern.df_threshold(t.LS, t.LN, t.lf, n, N1h, N0h, Kw, cap, 1, t.unimodal)
    if xi < 0:
        raise RuntimeError(f"no threshold <= {cap} satisfies the decision rule")
    return int(xi)


def df_detect_batch(prior: CsiPrior, counts, K: int, genie=None, xi_max: int = None,
                    return_thresholds: bool = False):
    """Decision-feedback detection of every row of ``counts``.

    Symbol ``k`` is detected with window ``min(k + 1, K)``. With ``genie``
    (true bits, same shape) the history uses the true bits instead of the
    detector's own decisions. A symbol for which no threshold exists below
    the cap is decided 0.
    """
    c = _as_rows(counts)
    if K < 1:
        raise ValueError("K must be >= 1")
    if genie is None:
        fb = np.zeros((1, 1), dtype=np.int8)
    else:
        fb = np.ascontiguousarray(np.asarray(genie, dtype=np.int8).reshape(c.shape))
    # largest history sum bounds the tables
    if K > 1:
        cs = np.concatenate([np.zeros((c.shape[0], 1), np.int64), np.cumsum(c, axis=1)], axis=1)
        w = min(K - 1, c.shape[1])
        hist = int((cs[:, w:] - cs[:, :-w]).max()) if w > 0 else 0
    else:
        hist = 0
    base = prior.default_xi_max() if xi_max is None else int(xi_max)
    t = prior.tables(K, hist + max(base, 4 * hist + 10))
    thr = np.empty(c.shape, dtype=np.int64)
    out = kern.df_stream(t.LS, t.LN, t.lf, c, K, fb, genie is not None,
                         base, t.unimodal, thr)
    if return_thresholds:
        return out, thr
    return out


def df_detect_stream(prior: CsiPrior, counts, K: int, genie=None) -> np.ndarray:
    """Decision-feedback detection of a single stream of counts."""
    c = np.asarray(counts)
    g = None if genie is None else np.asarray(genie)[None, :]
    return df_detect_batch(prior, c[None, :], K, genie=g)[0]


def _blind_rows(c):
    K = c.shape[1]
    if K < 2:
        raise ValueError("blind detection needs K >= 2")
    srt = np.sort(c, axis=1, kind="stable").astype(float)
    lo, hi = K // 2, K - K // 2
    cn = srt[:, :lo].mean(axis=1)
    cs = (srt[:, K - hi:] - cn[:, None]).mean(axis=1)
    cn_eff = np.where(cn > 0, cn, BLIND_NOISE_FLOOR)
    ok = cs > 0
    xi = np.full(c.shape[0], np.inf)
    xi[ok] = cs[ok] / np.log1p(cs[ok] / cn_eff[ok])
    bits = (c >= xi[:, None]).astype(np.int8)
    return bits, cs, cn


def blind_detect_windows(counts) -> np.ndarray:
    """Blind detection of each row of ``counts``; returns decisions only."""
    return _blind_rows(_as_rows(counts))[0]


def blind_detect(r: ObservationBlock):
    """Blind detector with order-statistic CSI estimates.

    Returns
    -------
    bits : ndarray of int8
    csi_hat : Csi
        Estimated ``(c_s, c_n)``; a non-positive signal estimate is
        reported as 0 and yields all-zero decisions.
    """
    bits, cs, cn = _blind_rows(_as_rows(r.counts))
    return bits[0], Csi(max(float(cs[0]), 0.0), float(cn[0]))
