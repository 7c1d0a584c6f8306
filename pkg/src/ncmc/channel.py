"""Stochastic diffusive channel: CSI realizations and Poisson observations.

The receiver sees, for symbol ``k``, a Poisson count with mean
``mean_signal * s[k] + mean_noise``. The mean signal count of one
realization is the peak over time of the expected number of molecules
inside the receiver, evaluated with randomly perturbed diffusion, flow and
enzyme parameters.
"""

from dataclasses import dataclass, replace
import math

import numpy as np

__all__ = [
    "ChannelParams", "ScenarioSigmas", "SCENARIOS", "Csi", "ObservationBlock",
    "expected_signal", "peak_time", "peak_signal", "sample_csi",
    "sample_csi_batch", "draw_observations", "isi_taps", "expected_isi",
    "draw_observations_with_isi", "signal_samples", "sample_taps_batch",
]

# coarse scan bracket for the peak search (seconds)
T_SCAN_LO = 1e-8
T_SCAN_HI = 10.0
N_SCAN = 512
_GOLDEN_ITERS = 48
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

MAX_REDRAWS = 10_000


@dataclass(frozen=True)
class ChannelParams:
    """Physical parameters of the diffusive link (SI units).

    Defaults are the nominal values used throughout the examples: a
    spherical receiver of radius 50 nm at 500 nm distance, diffusion
    4.365e-10 m^2/s, enzyme concentration 1e23 /m^3 with reaction rate
    2e-19 m^3/(molecule s), 1 mm/s flow in both directions and 1e4 molecules
    released per "1".
    """

    receiver_volume: float = 4.0 / 3.0 * math.pi * (50e-9) ** 3
    distance: float = 500e-9
    diffusion: float = 4.365e-10
    enzyme_conc: float = 1e23
    reaction_rate: float = 2e-19
    flow_parallel: float = 1e-3
    flow_perp: float = 1e-3
    n_tx: float = 1e4

    def __post_init__(self):
        for name in ("receiver_volume", "distance", "diffusion", "enzyme_conc",
                     "reaction_rate"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
        for name in ("flow_parallel", "flow_perp"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not (np.isfinite(self.n_tx) and self.n_tx >= 1):
            raise ValueError(f"n_tx must be >= 1, got {self.n_tx!r}")

    def with_n_tx(self, n_tx: float) -> "ChannelParams":
        return replace(self, n_tx=float(n_tx))


@dataclass(frozen=True)
class ScenarioSigmas:
    """Relative standard deviations of the randomized channel parameters."""

    sigma_diffusion: float = 0.0
    sigma_flow_parallel: float = 0.0
    sigma_flow_perp: float = 0.0
    sigma_enzyme: float = 0.0

    def __post_init__(self):
        for v in (self.sigma_diffusion, self.sigma_flow_parallel,
                  self.sigma_flow_perp, self.sigma_enzyme):
            if not (np.isfinite(v) and v >= 0):
                raise ValueError("sigmas must be finite and >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma_diffusion, self.sigma_flow_parallel,
                         self.sigma_flow_perp, self.sigma_enzyme])


SCENARIOS = {
    1: ScenarioSigmas(0.1, 0.5, 0.5, 0.1),
    2: ScenarioSigmas(0.2, 1.0, 1.5, 0.1),
    3: ScenarioSigmas(0.1, 1.5, 0.5, 0.2),
}


@dataclass(frozen=True)
class Csi:
    """One channel-state realization: mean signal and mean noise counts."""

    mean_signal: float
    mean_noise: float

    def __post_init__(self):
        for v in (self.mean_signal, self.mean_noise):
            if not (np.isfinite(v) and v >= 0):
                raise ValueError("CSI components must be finite and >= 0")


class ObservationBlock:
    """Molecule counts observed over one detection window.

    Parameters
    ----------
    counts : array_like of int
        Non-negative counts ``r[0..K-1]``.
    """

    def __init__(self, counts):
        c = np.asarray(counts)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("counts must be a non-empty 1-D sequence")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(np.equal(np.mod(c, 1), 0)):
                raise ValueError("counts must be integers")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        self.counts = c

    @property
    def K(self) -> int:
        return self.counts.size

    def stats(self, bits):
        """Return ``(n1, N1, N0)`` for the hypothesis ``bits``."""
        b = np.asarray(bits).astype(bool)
        if b.shape != self.counts.shape:
            raise ValueError("hypothesis length differs from block length")
        n1 = int(b.sum())
        N1 = int(self.counts[b].sum())
        N0 = int(self.counts[~b].sum())
        return n1, N1, N0

    def __len__(self):
        return self.K

    def __repr__(self):
        return f"ObservationBlock({self.counts.tolist()})"


def _signal(t, n_tx, vol, d, D, k_ce, vpar, vperp):
    # works on broadcast arrays; k_ce is reaction_rate * enzyme_conc
    spread = 4.0 * D * t
    expo = -k_ce * t - ((d - vpar * t) ** 2 + (vperp * t) ** 2) / spread
    return n_tx * vol / (math.pi * spread) ** 1.5 * np.exp(expo)


def expected_signal(params: ChannelParams, t):
    """Expected number of molecules inside the receiver at time ``t``.

    Parameters
    ----------
    params : ChannelParams
    t : float or ndarray
        Time after release in seconds; must be > 0.

    Returns
    -------
    float or ndarray
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr > 0)):
        raise ValueError("t must be > 0")
    out = _signal(t_arr, params.n_tx, params.receiver_volume, params.distance,
                  params.diffusion, params.reaction_rate * params.enzyme_conc,
                  params.flow_parallel, params.flow_perp)
    return float(out) if out.ndim == 0 else out


def _peak_search(n_tx, vol, d, D, k_ce, vpar, vperp):
    """Vectorized log-time scan plus golden-section refinement.

    All arguments broadcast against each other. Returns ``(t_max, value)``.
    """
    D, k_ce, vpar, vperp = np.broadcast_arrays(
        np.asarray(D, float), np.asarray(k_ce, float),
        np.asarray(vpar, float), np.asarray(vperp, float))
    shape = D.shape
    D, k_ce, vpar, vperp = (x.reshape(-1, 1) for x in (D, k_ce, vpar, vperp))

    def logf(u):
        # log of the signal at t = exp(u), constant prefactor dropped
        t = np.exp(u)
        spread = 4.0 * D * t
        return (-1.5 * np.log(spread) - k_ce * t
                - ((d - vpar * t) ** 2 + (vperp * t) ** 2) / spread)

    grid = np.linspace(math.log(T_SCAN_LO), math.log(T_SCAN_HI), N_SCAN)
    vals = logf(grid[None, :])
    i = np.argmax(vals, axis=1)
    lo = grid[np.maximum(i - 1, 0)].reshape(-1, 1)
    hi = grid[np.minimum(i + 1, N_SCAN - 1)].reshape(-1, 1)
    # log f is concave in ln t, so the bracket holds the unique maximizer
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = logf(x1), logf(x2)
    for _ in range(_GOLDEN_ITERS):
        left = f1 >= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        xn = np.where(left, hi - _INVPHI * (hi - lo), lo + _INVPHI * (hi - lo))
        fn = logf(xn)
        x1, x2 = np.where(left, xn, x2), np.where(left, x1, xn)
        f1, f2 = np.where(left, fn, f2), np.where(left, f1, fn)
    u = 0.5 * (lo + hi)
    t = np.exp(u)
    val = _signal(t, n_tx, vol, d, D, k_ce, vpar, vperp)
    return t.reshape(shape), val.reshape(shape)


_CHUNK = 4096


def _peak_batch(params: ChannelParams, D, ce, vpar, vperp):
    D = np.atleast_1d(np.asarray(D, float))
    ce, vpar, vperp = (np.broadcast_to(np.asarray(x, float), D.shape)
                       for x in (ce, vpar, vperp))
    t_out = np.empty(D.shape)
    v_out = np.empty(D.shape)
    flat = [x.reshape(-1) for x in (D, ce, vpar, vperp)]
    t_flat, v_flat = t_out.reshape(-1), v_out.reshape(-1)
    for s in range(0, flat[0].size, _CHUNK):
        sl = slice(s, s + _CHUNK)
        t, v = _peak_search(params.n_tx, params.receiver_volume, params.distance,
                            flat[0][sl], params.reaction_rate * flat[1][sl],
                            flat[2][sl], flat[3][sl])
        t_flat[sl] = t
        v_flat[sl] = v
    return t_out, v_out


def peak_time(params: ChannelParams) -> float:
    """Time at which the expected received count peaks.

    A coarse scan over log-spaced times in [1e-8, 10] s locates the peak
    bin, then golden-section search on ``ln t`` refines it well below 1e-6
    relative tolerance.
    """
    t, _ = _peak_batch(params, params.diffusion, params.enzyme_conc,
                       params.flow_parallel, params.flow_perp)
    return float(t[0])


def peak_signal(params: ChannelParams) -> float:
    """Maximum over time of :func:`expected_signal`."""
    _, v = _peak_batch(params, params.diffusion, params.enzyme_conc,
                       params.flow_parallel, params.flow_perp)
    return float(v[0])


def _perturbed(params: ChannelParams, sig, n, rng):
    """Draw ``n`` perturbed (D, c_e, v_par, v_perp) vectors, rejecting D <= 0 or c_e < 0."""
    nominal = np.array([params.diffusion, params.flow_parallel,
                        params.flow_perp, params.enzyme_conc])
    out = nominal * (1.0 + sig * rng.standard_normal((n, 4)))
    bad = (out[:, 0] <= 0) | (out[:, 3] < 0)
    tries = 0
    while bad.any():
        tries += 1
        if tries > MAX_REDRAWS:
            raise RuntimeError("parameter rejection loop exceeded its retry cap; "
                               "check the scenario sigmas")
        idx = np.flatnonzero(bad)
        out[idx] = nominal * (1.0 + sig * rng.standard_normal((idx.size, 4)))
        bad[idx] = (out[idx, 0] <= 0) | (out[idx, 3] < 0)
    return out


def signal_samples(params: ChannelParams, sigmas: ScenarioSigmas, n: int, rng):
    """``n`` independent draws of the mean signal count."""
    sig = sigmas.as_array()
    if not sig.any():
        return np.full(n, peak_signal(params))
    z = _perturbed(params, sig, n, rng)
    _, v = _peak_batch(params, z[:, 0], z[:, 3], z[:, 1], z[:, 2])
    return v


def sample_csi_batch(params: ChannelParams, sigmas: ScenarioSigmas, snr: float,
                     n: int, rng):
    """Draw ``n`` CSI realizations.

    The mean signal is the peak of the expected count with perturbed
    parameters; the mean noise is ``X / snr`` with ``X`` an independent
    draw from the same distribution as the mean signal.

    Returns
    -------
    mean_signal, mean_noise : ndarray
    """
    if not snr > 0:
        raise ValueError("snr must be > 0")
    cs = signal_samples(params, sigmas, n, rng)
    x = signal_samples(params, sigmas, n, rng)
    return cs, x / snr


def sample_csi(params: ChannelParams, sigmas: ScenarioSigmas, snr: float, rng) -> Csi:
    """Single CSI realization; see :func:`sample_csi_batch`."""
    cs, cn = sample_csi_batch(params, sigmas, snr, 1, rng)
    return Csi(float(cs[0]), float(cn[0]))


def draw_observations(csi: Csi, s, rng) -> ObservationBlock:
    """Poisson counts with means ``mean_signal * s[k] + mean_noise``."""
    bits = np.asarray(s)
    if bits.ndim != 1 or bits.size == 0:
        raise ValueError("symbol sequence must be non-empty")
    lam = csi.mean_signal * bits + csi.mean_noise
    return ObservationBlock(rng.poisson(lam))


def isi_taps(params: ChannelParams, t_symb: float, n_taps: int) -> np.ndarray:
    """Channel taps ``c_s(t_max + (l-1) t_symb)`` for ``l = 1..n_taps``."""
    if not t_symb > 0:
        raise ValueError("t_symb must be > 0")
    if n_taps < 1:
        raise ValueError("n_taps must be >= 1")
    t0 = peak_time(params)
    taps = np.atleast_1d(expected_signal(params, t0 + t_symb * np.arange(n_taps)))
    return np.asarray(taps, dtype=float)


def expected_isi(taps) -> float:
    """Mean ISI count under equiprobable bits: half the sum of the tail taps."""
    taps = np.asarray(taps, dtype=float)
    if taps.size < 1:
        raise ValueError("need at least one tap")
    return 0.5 * float(taps[1:].sum())


def draw_observations_with_isi(csi_taps, cn_ext: float, s, rng) -> ObservationBlock:
    """Counts with residual molecules from earlier symbols.

    ``count[k] ~ Poisson(sum_l s[k-l] taps[l] + cn_ext)`` (0-based taps);
    symbols before the block are taken as 0.
    """
    taps = np.asarray(csi_taps, dtype=float)
    if np.any(taps < 0):
        raise ValueError("taps must be non-negative")
    bits = np.asarray(s, dtype=float)
    lam = np.convolve(bits, taps)[:bits.size] + cn_ext
    return ObservationBlock(rng.poisson(lam))


def sample_taps_batch(params: ChannelParams, sigmas: ScenarioSigmas, t_symb: float,
                      n_taps: int, n: int, rng) -> np.ndarray:
    """Channel taps for ``n`` perturbed parameter draws, shape ``(n, n_taps)``.

    Each draw uses its own peak time; taps are spaced by ``t_symb``.
    """
    if not t_symb > 0 or n_taps < 1:
        raise ValueError("need t_symb > 0 and n_taps >= 1")
    sig = sigmas.as_array()
    if sig.any():
        z = _perturbed(params, sig, n, rng)
    else:
        z = np.tile([params.diffusion, params.flow_parallel, params.flow_perp,
                     params.enzyme_conc], (n, 1))
    t0, _ = _peak_batch(params, z[:, 0], z[:, 3], z[:, 1], z[:, 2])
    t = t0[:, None] + t_symb * np.arange(n_taps)[None, :]
    return _signal(t, params.n_tx, params.receiver_volume, params.distance,
                   z[:, :1], params.reaction_rate * z[:, 3:4], z[:, 1:2], z[:, 2:3])
