"""Gamma model for CSI marginals: density, weighted moments and fitting."""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import gammaln, xlogy

__all__ = [
    "GammaParams", "EmpiricalPdf", "gamma_pdf", "gamma_weighted_moment",
    "gamma_log_weighted_moment", "moments_to_gamma", "fit_gamma",
    "empirical_moments", "read_histogram", "fit_objective",
]


@dataclass(frozen=True)
class GammaParams:
    """Gamma distribution with shape ``alpha`` and rate ``beta``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be > 0, got {self.alpha!r}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be > 0, got {self.beta!r}")

    @property
    def mean(self) -> float:
        return self.alpha / self.beta

    @property
    def variance(self) -> float:
        return self.alpha / self.beta ** 2

    def scaled_rate(self, factor: float) -> "GammaParams":
        """Distribution of ``X / factor`` for ``X`` following this model."""
        return GammaParams(self.alpha, self.beta * factor)


def gamma_pdf(p: GammaParams, x):
    """Gamma density, zero for negative arguments."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logf = (p.alpha * math.log(p.beta) - gammaln(p.alpha)
                + xlogy(p.alpha - 1.0, x) - p.beta * x)
        out = np.where(x < 0, 0.0, np.exp(logf))
    return float(out) if out.ndim == 0 else out


def gamma_log_weighted_moment(p: GammaParams, a, b):
    """``ln E{x^a exp(-b x)}`` for ``x ~ Gamma(alpha, beta)``.

    Parameters
    ----------
    p : GammaParams
    a : int or ndarray
        Non-negative power.
    b : float or ndarray
        Exponential weight; ``b + beta`` must be positive.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b + p.beta <= 0):
        raise ValueError("b + beta must be > 0")
    out = (gammaln(a + p.alpha) - gammaln(p.alpha) + p.alpha * math.log(p.beta)
           - (a + p.alpha) * np.log(b + p.beta))
    return float(out) if out.ndim == 0 else out


def gamma_weighted_moment(p: GammaParams, a, b):
    """``E{x^a exp(-b x)}`` in linear scale (may overflow for large ``a``)."""
    return np.exp(gamma_log_weighted_moment(p, a, b))


def moments_to_gamma(mean: float, variance: float) -> GammaParams:
    """Gamma parameters with the given mean and variance."""
    if not (mean > 0 and variance > 0):
        raise ValueError("mean and variance must be > 0")
    return GammaParams(mean ** 2 / variance, mean / variance)


def empirical_moments(samples):
    """Sample mean and unbiased sample variance."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two samples")
    return float(x.mean()), float(x.var(ddof=1))


class EmpiricalPdf:
    """Histogram density estimate.

    Parameters
    ----------
    bin_edges : array_like
        Strictly ascending edges, length ``n + 1``.
    densities : array_like
        Non-negative density per bin, length ``n``.
    """

    def __init__(self, bin_edges, densities, norm_tol: float = 1e-3):
        e = np.asarray(bin_edges, dtype=float)
        f = np.asarray(densities, dtype=float)
        if e.ndim != 1 or f.ndim != 1 or e.size != f.size + 1 or f.size == 0:
            raise ValueError("need n + 1 edges for n densities")
        if np.any(np.diff(e) <= 0):
            raise ValueError("bin edges must be strictly ascending")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("densities must be finite and non-negative")
        total = float(np.sum(f * np.diff(e)))
        if abs(total - 1.0) > norm_tol:
            raise ValueError(f"histogram integrates to {total:.6g}, not 1")
        self.bin_edges = e
        self.densities = f

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @classmethod
    def from_samples(cls, samples, bins=200):
        x = np.asarray(samples, dtype=float).ravel()
        f, e = np.histogram(x, bins=bins, density=True)
        return cls(e, f)

    def moments(self):
        """Mean and variance of the piecewise-constant density."""
        w = self.densities * self.widths
        w = w / w.sum()
        lo, hi = self.bin_edges[:-1], self.bin_edges[1:]
        mu = float(np.sum(w * self.centers))
        # exact second moment of a uniform bin
        m2 = float(np.sum(w * (lo ** 2 + lo * hi + hi ** 2) / 3.0))
        return mu, max(m2 - mu ** 2, 0.0)


def read_histogram(path) -> EmpiricalPdf:
    """Read a histogram from a whitespace/comma separated text file.

    Two columns are read as (bin center, density) with bin edges placed
    halfway between centers (outer bins mirror their neighbor); three
    columns are read as (left edge, right edge, density) for contiguous
    bins. Lines starting with ``#`` are ignored.
    """
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            rows.append([float(v) for v in line.replace(",", " ").split()])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows)
    if data.ndim != 2 or data.shape[1] not in (2, 3):
        raise ValueError(f"{path}: expected 2 or 3 columns")
    if data.shape[1] == 3:
        left, right, dens = data.T
        if np.any(np.abs(left[1:] - right[:-1]) > 1e-9 * np.abs(right[:-1]).max()):
            raise ValueError(f"{path}: bins are not contiguous")
        edges = np.append(left, right[-1])
        return EmpiricalPdf(edges, dens)
    centers, dens = data.T
    if centers.size < 2:
        raise ValueError(f"{path}: need at least two bins")
    mids = 0.5 * (centers[1:] + centers[:-1])
    edges = np.concatenate([[centers[0] - (mids[0] - centers[0])], mids,
                            [centers[-1] + (centers[-1] - mids[-1])]])
    return EmpiricalPdf(edges, dens)


def _objective(hist: EmpiricalPdf, wx, alpha, beta):
    # alpha, beta broadcast; returns weighted squared error per grid point
    x = hist.centers
    xs = np.maximum(x, 1e-300)
    logf = (alpha[..., None] * np.log(beta[..., None]) - gammaln(alpha[..., None])
            + (alpha[..., None] - 1.0) * np.log(xs) - beta[..., None] * xs)
    f = np.where(x > 0, np.exp(logf), 0.0)
    return np.sum(wx * (hist.densities - f) ** 2 * hist.widths, axis=-1)


def fit_objective(hist: EmpiricalPdf, p: GammaParams, weight=None) -> float:
    """Weighted squared error between the histogram and a Gamma density."""
    wx = np.ones_like(hist.centers) if weight is None else \
        np.asarray([weight(x) for x in hist.centers], dtype=float)
    return float(_objective(hist, wx, np.array(p.alpha), np.array(p.beta)))


def fit_gamma(hist: EmpiricalPdf, weight=None, delta: float = 0.5, grid: int = 101):
    """Weighted least-squares Gamma fit to a histogram by bounded grid search.

    The search box is ``(1 +/- delta)`` times the moment-matched
    ``(mu^2/var, mu/var)`` of the histogram.

    Parameters
    ----------
    hist : EmpiricalPdf
    weight : callable, optional
        ``w(x)`` applied at bin centers; defaults to 1.
    delta : float
        Relative half-width of the search box.
    grid : int
        Points per axis.

    Returns
    -------
    params : GammaParams
    error : float
        Objective at ``params``.
    """
    if grid < 2:
        raise ValueError("grid must be >= 2")
    if not (delta >= 0):
        raise ValueError("delta must be >= 0")
    mu, var = hist.moments()
    if not var > 0 or not mu > 0:
        raise ValueError("histogram has zero variance (point-mass data); "
                         "a Gamma model cannot be fitted")
    center = moments_to_gamma(mu, var)
    wx = np.ones_like(hist.centers) if weight is None else \
        np.asarray([weight(x) for x in hist.centers], dtype=float)
    if delta == 0:
        return center, float(_objective(hist, wx, np.array(center.alpha),
                                        np.array(center.beta)))
    a_ax = center.alpha * np.linspace(1 - delta, 1 + delta, grid)
    b_ax = center.beta * np.linspace(1 - delta, 1 + delta, grid)
    a_ax = a_ax[a_ax > 0]
    b_ax = b_ax[b_ax > 0]
    A, B = np.meshgrid(a_ax, b_ax, indexing="ij")
    err = np.concatenate([_objective(hist, wx, A[i:i + 8], B[i:i + 8])
                          for i in range(0, A.shape[0], 8)])
    # row-major argmin on (alpha, beta) = ties to smaller alpha, then beta
    i, j = np.unravel_index(np.argmin(err), err.shape)
    return GammaParams(float(a_ax[i]), float(b_ax[j])), float(err[i, j])
