"""Command-line entry point: ``ncmc {sweep,bound,fit-csi,peak-time,validate}``."""

import argparse
import json
import os
import sys

import numpy as np

from ..channel import peak_signal, peak_time, sample_csi_batch
from ..csi_stats import fit_gamma, fit_objective, moments_to_gamma, read_histogram
from .config import ConfigError, SweepConfig, load_config
from .sweep import (db_to_linear, fit_csi_samples, run_bounds, run_isi, run_sweep,
                    write_csv, write_json, _rng)


def _config(args) -> SweepConfig:
    cfg = load_config(args.config) if args.config else SweepConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    return cfg


def _emit(report, cfg, name, fmt):
    if fmt == "json":
        path = write_json(report, os.path.join(cfg.out, name + ".json"))
    else:
        path = write_csv(report, os.path.join(cfg.out, name + ".csv"))
    print(path)


def cmd_sweep(args):
    cfg = _config(args)
    report = run_sweep(cfg, threads=args.threads,
                       progress=(lambda m: print(m, file=sys.stderr)) if args.verbose else None)
    _emit(report, cfg, "sweep", args.format)
    if args.isi:
        _emit(run_isi(cfg, threads=args.threads), cfg, "isi", args.format)
    return 0


def cmd_bound(args):
    cfg = _config(args)
    report = run_bounds(cfg, threads=args.threads,
                        progress=(lambda m: print(m, file=sys.stderr)) if args.verbose else None)
    _emit(report, cfg, "bound", args.format)
    return 0


def cmd_fit_csi(args):
    cfg = _config(args)
    snr_db = args.snr_db if args.snr_db is not None else cfg.snr_db[0]
    snr = db_to_linear(snr_db)
    result = {"snr_db": snr_db}
    if args.histogram:
        hist = read_histogram(args.histogram)
        p, err = fit_gamma(hist, delta=args.delta, grid=args.grid)
        result.update(source=args.histogram, signal=[p.alpha, p.beta], fit_error=err)
    else:
        if args.samples:
            data = np.loadtxt(args.samples, ndmin=2)
            cs = data[:, 0]
            source = args.samples
        else:
            params = cfg.params.with_n_tx(cfg.params.n_tx * snr)
            cs, _ = sample_csi_batch(params, cfg.sigmas, snr, cfg.n_prior_samples,
                                     _rng(cfg.seed, 1, 0))
            source = "generator"
        if cs.size < 1000:
            raise ValueError("need at least 1000 CSI samples")
        p, err, hist = fit_csi_samples(cs, delta=args.delta, grid=args.grid)
        c = moments_to_gamma(*hist.moments())
        center_err = fit_objective(hist, c)
        result.update(source=source, n_samples=int(cs.size), signal=[p.alpha, p.beta],
                      noise=[p.alpha, p.beta * snr], fit_error=err,
                      moment_center=[c.alpha, c.beta], moment_center_error=center_err)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "gamma_fit.json")
    with open(path, "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_peak_time(args):
    cfg = _config(args)
    out = {"t_max": peak_time(cfg.params), "peak_count": peak_signal(cfg.params)}
    print(json.dumps(out))
    return 0


def cmd_validate(args):
    from .validate import run_validation
    res = run_validation(seed=args.seed if args.seed is not None else 2024)
    print(json.dumps(res, indent=2))
    return 0 if res["passed"] else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="ncmc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("sweep", help="Monte Carlo BER sweep")
    common(p)
    p.add_argument("--isi", action="store_true", help="also run the ISI-as-noise experiment")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("bound", help="analytical bounds next to simulated BER")
    common(p)
    p.set_defaults(func=cmd_bound)
    p = sub.add_parser("fit-csi", help="fit a Gamma model to CSI samples or a histogram")
    common(p)
    p.add_argument("--samples", help="text file, first column = mean-signal samples")
    p.add_argument("--histogram", help="histogram file: (center, density) or (left, right, density)")
    p.add_argument("--snr-db", type=float)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--grid", type=int, default=101)
    p.set_defaults(func=cmd_fit_csi)
    p = sub.add_parser("peak-time", help="peak time and peak count of the channel")
    common(p)
    p.set_defaults(func=cmd_peak_time)
    p = sub.add_parser("validate", help="run the oracle validation suite")
    common(p)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
