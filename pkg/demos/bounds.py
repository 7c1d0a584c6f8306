"""Simulated MS BER between the genie-aided DF lower bound and the union bound.

Scenario 2, K = 8. The SS row pairs simulation with the analytical BER
averaged over the same CSI draws.
"""

from ncmc.channel import SCENARIOS
from ncmc.harness.config import SweepConfig
from ncmc.harness.sweep import run_bounds

cfg = SweepConfig(sigmas=SCENARIOS[2], snr_db=(0.0, 5.0, 10.0, 15.0), K=8, trials=3000,
                  n_bound=200, seed=2)
rep = run_bounds(cfg)
cols = ("gadf", "ms", "ub", "ub_raw", "ss", "ss_analytic")
print("snr_db" + "".join(f"{c:>13s}" for c in cols))
for snr in cfg.snr_db:
    print(f"{snr:<6g}" + "".join(f"{rep.get(c, snr).ber:13.4g}" for c in cols))
