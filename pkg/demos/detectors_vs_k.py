"""BER of the coherent, MS, SS, DF and blind detectors against window size.

Scenario 2 at 10 dB; a block of B = 5K symbols shares one CSI draw. The MS
and DF detectors use the fitted Gamma prior, the blind detector none.
"""

from ncmc.channel import SCENARIOS
from ncmc.harness.config import SweepConfig
from ncmc.harness.sweep import run_sweep

dets = ("coherent", "ms", "ss", "df", "blind")
print("K   " + "".join(f"{d:>11s}" for d in dets))
for K in (2, 4, 6, 10, 16):
    cfg = SweepConfig(sigmas=SCENARIOS[2], snr_db=(10.0,), detectors=dets, K=K,
                      trials=2000, seed=3)
    rep = run_sweep(cfg)
    print(f"{K:<4d}" + "".join(f"{rep.get(d, 10.0).ber:11.4g}" for d in dets))
