"""Non-coherent detection and BER analysis for Poisson molecular-communication channels."""

__version__ = "0.1.0"

from .channel import (ChannelParams, Csi, ObservationBlock, SCENARIOS, ScenarioSigmas,
                      draw_observations, expected_signal, peak_time, sample_csi)
from .csi_stats import GammaParams, EmpiricalPdf, fit_gamma, moments_to_gamma
from .detectors import (CsiPrior, MsMetricInputs, blind_detect, coherent_threshold,
                        df_detect_stream, df_threshold, ms_detect, ms_log_metric,
                        ss_threshold)
from .analysis import (genie_df_ber, ms_union_bound, pairwise_error_prob,
                       ss_ber_conditional)
