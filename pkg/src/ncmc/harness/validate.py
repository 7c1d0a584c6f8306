"""Desk-scale validation suite behind ``ncmc validate``.

Each check compares a library routine with an independent reference
(hand values, enumeration or quadrature) and returns ``(passed, detail)``.
"""

import math
import time
import zlib

import numpy as np

from ..analysis import genie_df_ber, pairwise_error_prob, ss_ber_conditional
from ..channel import Csi, ObservationBlock
from ..csi_stats import GammaParams, gamma_log_weighted_moment
from ..detectors import CsiPrior, MsMetricInputs, ms_detect, ms_log_metric, ss_threshold
from ..oracle import exhaustive_ms_scores, exhaustive_pep, quad_log_moment

__all__ = ["CHECKS", "run_validation"]


def check_gamma_moments(rng):
    worst = 0.0
    for alpha in (0.5, 1.0, 2.0, 10.0):
        for beta in (0.1, 1.0, 10.0):
            for a in (0, 1, 7, 50, 200):
                for b in (0.0, 1.0, 50.0):
                    lq = quad_log_moment(GammaParams(alpha, beta), a, b)
                    lc = gamma_log_weighted_moment(GammaParams(alpha, beta), a, b)
                    worst = max(worst, abs(math.expm1(lc - lq)))
    return worst < 1e-8, f"max relative error {worst:.3g}"


def check_ms_vs_exhaustive(rng):
    mism = tested = 0
    for trial in range(200):
        a_s, a_n = rng.uniform(1, 20, 2)
        m_s, m_n = rng.uniform(1, 30), rng.uniform(0.3, 5)
        prior = CsiPrior.gamma(GammaParams(a_s, a_s / m_s), GammaParams(a_n, a_n / m_n))
        bits = rng.integers(0, 2, 6)
        r = ObservationBlock(rng.poisson(m_s * bits + m_n))
        ref, gap = exhaustive_ms_scores(prior, r)
        if gap <= 1e-9:
            continue
        tested += 1
        mism += int(np.any(ms_detect(prior, r) != ref))
    return mism == 0, f"{mism} mismatches in {tested} tie-free blocks"


def check_ss_hand(rng):
    v = ss_ber_conditional(Csi(4.0, 1.0), 2)
    ref = 0.5 + 0.5 * (6 * math.exp(-5) - 2 * math.exp(-1))
    return abs(v - ref) < 1e-12 and abs(v - 0.152335) < 1e-6, f"BER {v:.9f}"


def check_pep(rng):
    worst = 0.0
    for _ in range(5):
        csi = Csi(float(rng.uniform(0.5, 6)), float(rng.uniform(0.2, 2)))
        prior = CsiPrior.gamma(GammaParams(3.0, 3.0 / csi.mean_signal),
                               GammaParams(3.0, 3.0 / csi.mean_noise))
        s, sh = rng.integers(0, 2, 2), rng.integers(0, 2, 2)
        if np.all(s == sh):
            sh = 1 - s
        n1, nh, ov = int(s.sum()), int(sh.sum()), int((s & sh).sum())
        v = pairwise_error_prob(csi, 2, n1, nh, ov, prior)
        ref, tail = exhaustive_pep(csi, 2, s, sh, prior)
        worst = max(worst, abs(v - ref) - tail)
    return worst < 1e-6, f"max excess deviation {worst:.3g}"


def check_ratio_monotone(rng):
    # Gamma priors in the sweep family (noise rate = snr * signal rate,
    # snr >= 1) plus point masses. A noise tail heavier than the signal
    # tail can break monotonicity, see tests/test_detectors.py.
    worst = np.inf
    for i in range(15):
        if i < 10:
            a, b = rng.uniform(0.3, 20), rng.uniform(0.05, 3)
            snr = 10.0 ** rng.uniform(0, 3)
            prior = CsiPrior.gamma(GammaParams(a, b), GammaParams(a, b * snr))
        else:
            prior = CsiPrior.point_mass(Csi(rng.uniform(0.1, 50), rng.uniform(0.05, 10)))
        d = [ms_log_metric(prior, MsMetricInputs(1, r, 0, 1))
             - ms_log_metric(prior, MsMetricInputs(0, 0, r, 1)) for r in range(201)]
        worst = min(worst, float(np.min(np.diff(d))))
    return worst >= -1e-9, f"min increment {worst:.3g}"


def check_genie_k1(rng):
    csi = Csi(6.0, 0.8)
    prior = CsiPrior.gamma(GammaParams(4.0, 4.0 / 6.0), GammaParams(4.0, 5.0))
    g = genie_df_ber(csi, 1, prior)
    s = ss_ber_conditional(csi, ss_threshold(prior))
    return abs(g - s) < 1e-10, f"difference {abs(g - s):.3g}"


CHECKS = {
    "gamma_moment_vs_quadrature": check_gamma_moments,
    "ms_vs_exhaustive": check_ms_vs_exhaustive,
    "ss_ber_hand_case": check_ss_hand,
    "pep_vs_enumeration": check_pep,
    "likelihood_ratio_monotone": check_ratio_monotone,
    "genie_k1_equals_ss": check_genie_k1,
}


def run_validation(seed: int = 2024):
    """Run all checks; returns a dict with per-check verdicts and ``passed``."""
    out = {"seed": seed, "checks": {}}
    ok = True
    for name, fn in CHECKS.items():
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),)))
        t0 = time.perf_counter()
        try:
            passed, detail = fn(rng)
        except Exception as exc:  # report, don't abort the suite
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        out["checks"][name] = {"passed": bool(passed), "detail": detail,
                               "seconds": round(time.perf_counter() - t0, 3)}
        ok &= bool(passed)
    out["passed"] = ok
    return out
