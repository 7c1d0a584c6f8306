"""Monte Carlo BER sweeps, analytical bound reports and CSI fitting.

Work is split into fixed chunks of trials. Chunk ``j`` at SNR index ``i``
draws from ``SeedSequence(seed, spawn_key=(0, i, j))``, and per-chunk
error counts are merged in chunk order, so results do not depend on the
number of worker threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import io
import json
import math
import os

import numpy as np

from .. import __version__
from ..analysis import (genie_df_average, regularized_q, union_bound_average)
from ..channel import (Csi, expected_isi, peak_time, sample_csi_batch,
                       sample_taps_batch, signal_samples)
from ..csi_stats import (EmpiricalPdf, GammaParams, empirical_moments, fit_gamma,
                         moments_to_gamma)
from ..detectors import (CsiPrior, blind_detect_windows, df_detect_batch,
                         ms_detect_windows, ss_threshold)
from .config import SweepConfig

__all__ = [
    "BerRow", "BerReport", "run_sweep", "run_bounds", "run_isi", "build_prior",
    "fit_csi_samples", "write_csv", "write_json", "report_csv_text",
    "db_to_linear", "CSV_HEADER",
]

CSV_HEADER = ("snr_db", "detector", "ber", "ci95", "trials", "decisions")


def db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def half_width(p: float, n: int) -> float:
    """95% normal-approximation half-width of a binomial proportion."""
    if n <= 0:
        return 0.0
    return 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / n)


@dataclass
class BerRow:
    snr_db: float
    detector: str
    ber: float
    ci95: float
    trials: int
    decisions: int


@dataclass
class BerReport:
    metadata: dict
    rows: list = field(default_factory=list)

    def get(self, detector, snr_db=None):
        out = [r for r in self.rows if r.detector == detector
               and (snr_db is None or r.snr_db == snr_db)]
        if snr_db is not None:
            if len(out) != 1:
                raise KeyError((detector, snr_db))
            return out[0]
        return out


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def fit_csi_samples(samples, bins=None, delta=0.5, grid=101):
    """Histogram the samples and fit a Gamma model; returns (params, error, hist)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        raise ValueError("CSI samples are constant (point-mass data); "
                         "a Gamma model cannot be fitted")
    if bins is None:
        bins = int(min(200, max(20, math.sqrt(x.size))))
    hist = EmpiricalPdf.from_samples(x, bins=bins)
    p, err = fit_gamma(hist, delta=delta, grid=grid)
    return p, err, hist


def build_prior(cfg: SweepConfig, snr_index: int, snr: float):
    """Detector prior at one SNR from freshly drawn CSI samples.

    Returns
    -------
    prior : CsiPrior
    info : dict
        Description of the prior for the report sidecar.
    """
    params = cfg.params.with_n_tx(cfg.params.n_tx * snr)
    rng = _rng(cfg.seed, 1, snr_index)
    cs, cn = sample_csi_batch(params, cfg.sigmas, snr, cfg.n_prior_samples, rng)
    src = cfg.prior_source
    if src == "point-mass" or np.ptp(cs) == 0:
        prior = CsiPrior.point_mass(Csi(float(cs.mean()), float(cn.mean())))
        return prior, {"source": "point-mass", "mean_signal": prior.mean()[0],
                       "mean_noise": prior.mean()[1]}
    if src == "empirical-samples":
        m = min(cs.size, 2000)
        prior = CsiPrior.from_samples(cs[:m], cn[:m])
        return prior, {"source": src, "n_samples": m}
    if src == "fitted-gamma":
        gs, err, _ = fit_csi_samples(cs)
    else:
        gs, err = moments_to_gamma(*empirical_moments(cs)), float("nan")
    # c_n = X / snr with X distributed as c_s
    gn = gs.scaled_rate(snr)
    return CsiPrior.gamma(gs, gn), {"source": src, "signal": [gs.alpha, gs.beta],
                                    "noise": [gn.alpha, gn.beta], "fit_error": err}


def _chunk(cfg: SweepConfig, snr_index, snr, j, n, prior, xi_ss, ss_analytic=False):
    rng = _rng(cfg.seed, 0, snr_index, j)
    params = cfg.params.with_n_tx(cfg.params.n_tx * snr)
    cs, cn = sample_csi_batch(params, cfg.sigmas, snr, n, rng)
    B, K = cfg.B, cfg.K
    bits = rng.integers(0, 2, size=(n, B), dtype=np.int8)
    counts = rng.poisson(cs[:, None] * bits + cn[:, None]).astype(np.int64)
    res = {}
    for det in cfg.detectors:
        if det == "coherent":
            xi = cs / np.log1p(cs / cn)
            dec = (counts >= xi[:, None]).astype(np.int8)
            res[det] = (int(np.count_nonzero(dec != bits)), bits.size)
        elif det == "ss":
            dec = (counts >= xi_ss).astype(np.int8)
            res[det] = (int(np.count_nonzero(dec != bits)), bits.size)
            if ss_analytic:
                # expected errors given this chunk's CSI draws
                res["ss_analytic"] = (float(_ss_analytic(cs, cn, xi_ss).sum()) * B, bits.size)
        elif det == "ms":
            dec = ms_detect_windows(prior, counts.reshape(-1, K)).reshape(n, B)
            res[det] = (int(np.count_nonzero(dec != bits)), bits.size)
        elif det == "df":
            dec = df_detect_batch(prior, counts, K)
            full = slice(K - 1, B)
            res[det] = (int(np.count_nonzero(dec[:, full] != bits[:, full])),
                        n * (B - K + 1))
        elif det == "blind":
            dec = blind_detect_windows(counts.reshape(-1, K)).reshape(n, B)
            res[det] = (int(np.count_nonzero(dec != bits)), bits.size)
    return res


def _chunks(cfg):
    sizes = [cfg.chunk] * (cfg.trials // cfg.chunk)
    if cfg.trials % cfg.chunk:
        sizes.append(cfg.trials % cfg.chunk)
    return sizes


def run_sweep(cfg: SweepConfig, threads: int = 1, progress=None,
              ss_analytic: bool = False) -> BerReport:
    """Simulate every configured detector at every SNR point.

    With ``ss_analytic`` (and ``"ss"`` among the detectors) an extra
    ``ss_analytic`` row holds the exact conditional SS BER averaged over
    the same CSI draws as the simulation; its ``ci95`` is 0.
    """
    meta = {"config": cfg.to_dict(), "seed": cfg.seed, "version": __version__, "priors": {}}
    report = BerReport(meta)
    threads = max(1, int(threads))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for i, snr_db in enumerate(cfg.snr_db):
            snr = db_to_linear(snr_db)
            prior, info = build_prior(cfg, i, snr)
            meta["priors"][f"{snr_db:g}"] = info
            xi_ss = ss_threshold(prior) if ("ss" in cfg.detectors) else None
            if "ms" in cfg.detectors or "df" in cfg.detectors:
                # warm the shared tables once before threads use them
                prior.tables(cfg.K, 64)
            sizes = _chunks(cfg)
            jobs = [pool.submit(_chunk, cfg, i, snr, j, n, prior, xi_ss, ss_analytic)
                    for j, n in enumerate(sizes)]
            names = list(cfg.detectors)
            if ss_analytic and "ss" in names:
                names.append("ss_analytic")
            totals = {d: [0, 0] for d in names}
            for job in jobs:
                for d, (e, n) in job.result().items():
                    totals[d][0] += e
                    totals[d][1] += n
            for d in names:
                e, n = totals[d]
                p = e / n
                hw = 0.0 if d == "ss_analytic" else half_width(p, n)
                report.rows.append(BerRow(snr_db, d, p, hw, cfg.trials, n))
            if progress:
                progress(f"snr {snr_db:g} dB done")
    return report


def _ss_analytic(cs, cn, xi):
    return 0.5 + 0.5 * (regularized_q(xi, cs + cn) - regularized_q(xi, cn))


def _mean_hw(vals):
    v = np.asarray(vals, dtype=float)
    hw = 1.96 * float(v.std(ddof=1)) / math.sqrt(v.size) if v.size > 1 else 0.0
    return float(v.mean()), hw


def run_bounds(cfg: SweepConfig, threads: int = 1, progress=None) -> BerReport:
    """Analytical SS BER, union bound and genie-aided DF bound with simulations.

    Simulated rows come from :func:`run_sweep` restricted to the MS and SS
    detectors. The ``ss_analytic`` row averages the exact conditional SS
    BER over the simulation's own CSI draws. Bound rows (``ub_raw``,
    ``ub`` with each draw clipped to 1, ``gadf``) average over
    ``n_bound`` independent draws; their ``ci95`` is the 95% half-width
    of that CSI average.
    """
    if cfg.K > 12:
        raise ValueError("bounds support K <= 12")
    sim_cfg = SweepConfig(**{**cfg.__dict__, "detectors": ("ms", "ss")})
    report = run_sweep(sim_cfg, threads=threads, progress=progress, ss_analytic=True)
    report.metadata["config"] = cfg.to_dict()
    for i, snr_db in enumerate(cfg.snr_db):
        snr = db_to_linear(snr_db)
        prior, _ = build_prior(cfg, i, snr)
        params = cfg.params.with_n_tx(cfg.params.n_tx * snr)
        rng = _rng(cfg.seed, 2, i)
        cs, cn = sample_csi_batch(params, cfg.sigmas, snr, cfg.n_bound, rng)
        ub = union_bound_average(cs, cn, cfg.K, prior)
        for name, vals in (("ub_raw", ub.raw_draws), ("ub", np.minimum(ub.raw_draws, 1.0)),
                           ("gadf", genie_df_average(cs, cn, cfg.K, prior))):
            m, hw = _mean_hw(vals)
            report.rows.append(BerRow(snr_db, name, m, hw, cs.size, 0))
        if progress:
            progress(f"bounds at {snr_db:g} dB done")
    return report


def run_isi(cfg: SweepConfig, threads: int = 1) -> BerReport:
    """BER with residual ISI treated as extra noise, over the external SNR grid.

    Taps follow each draw's own perturbed channel; the symbol interval is
    ``isi_t_symb_factor`` times the nominal peak time. Detectors see
    ``c_n = c_n_ext + expected ISI`` and ``c_s`` = first tap.
    """
    t_symb = cfg.isi_t_symb_factor * peak_time(cfg.params)
    meta = {"config": cfg.to_dict(), "seed": cfg.seed, "version": __version__,
            "t_symb": t_symb}
    report = BerReport(meta)
    dets = [d for d in cfg.detectors if d in ("coherent", "ss", "ms")]
    for i, snr_db in enumerate(cfg.isi_ext_snr_db):
        snr = db_to_linear(snr_db)
        params = cfg.params.with_n_tx(cfg.params.n_tx * snr)
        prng = _rng(cfg.seed, 3, i)
        ptaps = sample_taps_batch(params, cfg.sigmas, t_symb, cfg.isi_n_taps,
                                  cfg.n_prior_samples, prng)
        px = signal_samples(params, cfg.sigmas, cfg.n_prior_samples, prng) / snr
        p_cs = ptaps[:, 0]
        p_cn = px + 0.5 * ptaps[:, 1:].sum(axis=1)
        if np.ptp(p_cs) > 0:
            prior = CsiPrior.gamma(moments_to_gamma(*empirical_moments(p_cs)),
                                   moments_to_gamma(*empirical_moments(p_cn)))
        else:
            prior = CsiPrior.point_mass(Csi(float(p_cs[0]), float(p_cn[0])))
        xi_ss = ss_threshold(prior)

        def work(j, n):
            rng = _rng(cfg.seed, 4, i, j)
            taps = sample_taps_batch(params, cfg.sigmas, t_symb, cfg.isi_n_taps, n, rng)
            cn_ext = signal_samples(params, cfg.sigmas, n, rng) / snr
            bits = rng.integers(0, 2, size=(n, cfg.B), dtype=np.int8)
            lam = np.empty((n, cfg.B))
            for m in range(n):
                lam[m] = np.convolve(bits[m], taps[m])[:cfg.B]
            counts = rng.poisson(lam + cn_ext[:, None]).astype(np.int64)
            cs = taps[:, 0]
            cn = cn_ext + np.array([expected_isi(t) for t in taps])
            out = {}
            for d in dets:
                if d == "coherent":
                    dec = counts >= (cs / np.log1p(cs / cn))[:, None]
                elif d == "ss":
                    dec = counts >= xi_ss
                else:
                    dec = ms_detect_windows(prior, counts.reshape(-1, cfg.K)).reshape(n, cfg.B)
                out[d] = int(np.count_nonzero(dec != bits))
            return out

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            res = list(pool.map(lambda a: work(*a), enumerate(_chunks(cfg))))
        n_dec = cfg.trials * cfg.B
        for d in dets:
            p = sum(r[d] for r in res) / n_dec
            report.rows.append(BerRow(snr_db, d, p, half_width(p, n_dec), cfg.trials, n_dec))
    return report


def _fmt(v):
    if isinstance(v, float):
        return repr(float(f"{v:.12g}"))
    return str(v)


def report_csv_text(report: BerReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.rows:
        w.writerow([_fmt(r.snr_db), r.detector, _fmt(r.ber), _fmt(r.ci95),
                    r.trials, r.decisions])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if hasattr(o, "__dict__"):
        return o.__dict__
    raise TypeError(type(o))


def write_csv(report: BerReport, path) -> str:
    """Write ``path`` plus a JSON sidecar ``path`` with ``.json`` suffix."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(report_csv_text(report))
    side = os.path.splitext(path)[0] + ".json"
    with open(side, "w") as fh:
        json.dump(report.metadata, fh, indent=2, sort_keys=True, default=_json_default)
    return path


def write_json(report: BerReport, path) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    doc = {"metadata": report.metadata, "rows": [r.__dict__ for r in report.rows]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
    return path
