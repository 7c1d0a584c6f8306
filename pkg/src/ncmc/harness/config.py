"""Sweep configuration: dataclass plus an INI-style loader.

Example file::

    [channel]
    scenario = 2            ; or sigma_diffusion = ..., etc.
    n_tx_ref = 10000

    [sweep]
    snr_db = 0, 5, 10, 15, 20
    detectors = coherent, ms, ss, df, blind
    K = 10
    block_ratio = 5         ; B = block_ratio * K
    trials = 10000
    seed = 1
    chunk = 256

    [prior]
    source = fitted-gamma   ; fitted-gamma | moment-gamma | empirical-samples | point-mass
    n_samples = 10000
    n_bound = 1000

    [isi]
    t_symb_factor = 2
    n_taps = 3
    ext_snr_db = 0, 10, 20

Unknown sections or keys raise :class:`ConfigError`.
"""

import configparser
from dataclasses import asdict, dataclass, field
import math

from ..channel import ChannelParams, SCENARIOS, ScenarioSigmas

__all__ = ["ConfigError", "SweepConfig", "load_config", "DETECTORS", "PRIOR_SOURCES"]

DETECTORS = ("coherent", "ms", "ss", "df", "blind")
PRIOR_SOURCES = ("fitted-gamma", "moment-gamma", "empirical-samples", "point-mass")


class ConfigError(ValueError):
    pass


@dataclass
class SweepConfig:
    """Settings for a Monte Carlo BER sweep."""

    sigmas: ScenarioSigmas = field(default_factory=lambda: SCENARIOS[1])
    params: ChannelParams = field(default_factory=ChannelParams)
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    detectors: tuple = DETECTORS
    K: int = 10
    block_ratio: int = 5
    trials: int = 10_000
    seed: int = 1
    chunk: int = 256
    prior_source: str = "fitted-gamma"
    n_prior_samples: int = 10_000
    n_bound: int = 1_000
    out: str = "results"
    isi_t_symb_factor: float = 2.0
    isi_n_taps: int = 3
    isi_ext_snr_db: tuple = (0.0, 10.0, 20.0, 30.0)

    def __post_init__(self):
        self.snr_db = tuple(float(v) for v in self.snr_db)
        self.detectors = tuple(self.detectors)
        self.isi_ext_snr_db = tuple(float(v) for v in self.isi_ext_snr_db)
        if not self.snr_db:
            raise ConfigError("snr grid must be non-empty")
        bad = [d for d in self.detectors if d not in DETECTORS]
        if bad or not self.detectors:
            raise ConfigError(f"unknown detectors {bad}; choose from {DETECTORS}")
        if self.K < 1 or self.block_ratio < 1:
            raise ConfigError("K and block_ratio must be >= 1")
        if "blind" in self.detectors and self.K < 2:
            raise ConfigError("the blind detector needs K >= 2")
        if self.trials < 1 or self.chunk < 1:
            raise ConfigError("trials and chunk must be >= 1")
        if self.prior_source not in PRIOR_SOURCES:
            raise ConfigError(f"prior source must be one of {PRIOR_SOURCES}")
        if self.n_prior_samples < 2 or self.n_bound < 1:
            raise ConfigError("n_samples must be >= 2 and n_bound >= 1")
        if self.isi_n_taps < 1 or not self.isi_t_symb_factor > 0:
            raise ConfigError("invalid ISI settings")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def B(self) -> int:
        return self.K * self.block_ratio

    def to_dict(self) -> dict:
        d = asdict(self)
        d["B"] = self.B
        return d


def _floats(text):
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _words(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


_SCHEMA = {
    "channel": {
        "scenario": int,
        "sigma_diffusion": float, "sigma_flow_parallel": float,
        "sigma_flow_perp": float, "sigma_enzyme": float,
        "n_tx_ref": float, "receiver_volume": float, "distance": float,
        "diffusion": float, "enzyme_conc": float, "reaction_rate": float,
        "flow_parallel": float, "flow_perp": float,
    },
    "sweep": {
        "snr_db": _floats, "detectors": _words, "k": int, "block_ratio": int,
        "trials": int, "seed": int, "chunk": int, "out": str,
    },
    "prior": {"source": str, "n_samples": int, "n_bound": int},
    "isi": {"t_symb_factor": float, "n_taps": int, "ext_snr_db": _floats},
}


def load_config(path=None, text=None) -> SweepConfig:
    """Parse a config file (or string) into a :class:`SweepConfig`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        if text is not None:
            cp.read_string(text)
        elif path is not None:
            with open(path) as fh:
                cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    vals = {}
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            conv = _SCHEMA[sec].get(key)
            if conv is None:
                raise ConfigError(f"unknown key '{key}' in [{sec}]")
            try:
                vals[(sec, key)] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from exc

    kw = {}
    sig_keys = ("sigma_diffusion", "sigma_flow_parallel", "sigma_flow_perp", "sigma_enzyme")
    if ("channel", "scenario") in vals:
        sc = vals[("channel", "scenario")]
        if sc not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {sorted(SCENARIOS)}")
        if any(("channel", k) in vals for k in sig_keys):
            raise ConfigError("give either a scenario or explicit sigmas, not both")
        kw["sigmas"] = SCENARIOS[sc]
    elif any(("channel", k) in vals for k in sig_keys):
        kw["sigmas"] = ScenarioSigmas(*(vals.get(("channel", k), 0.0) for k in sig_keys))
    pkw = {}
    for k in ("receiver_volume", "distance", "diffusion", "enzyme_conc",
              "reaction_rate", "flow_parallel", "flow_perp"):
        if ("channel", k) in vals:
            pkw[k] = vals[("channel", k)]
    if ("channel", "n_tx_ref") in vals:
        pkw["n_tx"] = vals[("channel", "n_tx_ref")]
    try:
        kw["params"] = ChannelParams(**pkw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    mapping = {
        ("sweep", "snr_db"): "snr_db", ("sweep", "detectors"): "detectors",
        ("sweep", "k"): "K", ("sweep", "block_ratio"): "block_ratio",
        ("sweep", "trials"): "trials", ("sweep", "seed"): "seed",
        ("sweep", "chunk"): "chunk", ("sweep", "out"): "out",
        ("prior", "source"): "prior_source", ("prior", "n_samples"): "n_prior_samples",
        ("prior", "n_bound"): "n_bound", ("isi", "t_symb_factor"): "isi_t_symb_factor",
        ("isi", "n_taps"): "isi_n_taps", ("isi", "ext_snr_db"): "isi_ext_snr_db",
    }
    for src, dst in mapping.items():
        if src in vals:
            kw[dst] = vals[src]
    if any(not math.isfinite(v) for v in kw.get("snr_db", ())):
        raise ConfigError("snr values must be finite")
    return SweepConfig(**kw)
