import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncmc.channel import (
    SCENARIOS, ChannelParams, Csi, ObservationBlock, ScenarioSigmas, draw_observations,
    draw_observations_with_isi, expected_isi, expected_signal, isi_taps, peak_signal,
    peak_time, sample_csi, sample_csi_batch,
)

# single-expression evaluation of the nominal link at t = 9.545e-5 s
SIGNAL_AT_9545 = 0.7265136142023677


def closed_form_peak(p: ChannelParams):
    # d/dt ln c(t) = 0 is a quadratic in t:
    # A t^2 + 1.5 t - d^2 / (4 D) = 0, A = k c_e + (v_par^2 + v_perp^2) / (4 D)
    A = p.reaction_rate * p.enzyme_conc + (p.flow_parallel ** 2 + p.flow_perp ** 2) / (4 * p.diffusion)
    c = p.distance ** 2 / (4 * p.diffusion)
    return (-1.5 + math.sqrt(2.25 + 4 * A * c)) / (2 * A)


def test_expected_signal_hand_value():
    assert expected_signal(ChannelParams(), 9.545e-5) == pytest.approx(SIGNAL_AT_9545, rel=1e-12)


def test_expected_signal_domain():
    for t in (0.0, -1e-6):
        with pytest.raises(ValueError):
            expected_signal(ChannelParams(), t)


def test_expected_signal_limits():
    p = ChannelParams()
    assert expected_signal(p, 1e-9) < 1e-100
    assert expected_signal(p, 1.0) < 1e-100
    assert np.all(expected_signal(p, np.logspace(-6, -3.5, 50)) > 0)


def test_expected_signal_reduced_form():
    p = ChannelParams(flow_parallel=0.0, flow_perp=0.0, reaction_rate=1e-300)
    t = 3e-5
    ref = p.n_tx * p.receiver_volume / (4 * math.pi * p.diffusion * t) ** 1.5 \
        * math.exp(-p.distance ** 2 / (4 * p.diffusion * t))
    assert expected_signal(p, t) == pytest.approx(ref, rel=1e-12)


def test_peak_time_zero_flow():
    p = ChannelParams(flow_parallel=0.0, flow_perp=0.0, reaction_rate=1e-300)
    ref = p.distance ** 2 / (6 * p.diffusion)
    assert ref == pytest.approx(9.545e-5, rel=1e-3)
    assert peak_time(p) == pytest.approx(ref, rel=1e-6)
    p2 = ChannelParams(flow_parallel=0.0, flow_perp=0.0, reaction_rate=1e-300,
                       diffusion=2 * p.diffusion)
    assert peak_time(p2) == pytest.approx(ref / 2, rel=1e-6)


def test_peak_time_nominal_against_grid_and_closed_form():
    p = ChannelParams()
    t = peak_time(p)
    grid = np.linspace(1e-7, 1e-3, 100_000)
    t_grid = grid[np.argmax(expected_signal(p, grid))]
    assert t == pytest.approx(t_grid, rel=1e-3)
    assert t == pytest.approx(closed_form_peak(p), rel=1e-6)
    assert peak_signal(p) == pytest.approx(expected_signal(p, t), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(D=st.floats(1e-11, 1e-8), d=st.floats(1e-7, 5e-6), ce=st.floats(1e18, 1e25),
       vp=st.floats(-5e-3, 5e-3), vq=st.floats(-5e-3, 5e-3))
def test_peak_time_matches_closed_form(D, d, ce, vp, vq):
    p = ChannelParams(diffusion=D, distance=d, enzyme_conc=ce, flow_parallel=vp, flow_perp=vq)
    assert peak_time(p) == pytest.approx(closed_form_peak(p), rel=1e-6)


def test_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(diffusion=-1.0)
    with pytest.raises(ValueError):
        ChannelParams(n_tx=0.5)
    ChannelParams(flow_parallel=-1e-3)  # flows may be negative
    with pytest.raises(ValueError):
        ScenarioSigmas(-0.1, 0, 0, 0)
    with pytest.raises(ValueError):
        Csi(-1.0, 1.0)
    with pytest.raises(ValueError):
        Csi(1.0, float("nan"))


def test_sample_csi_deterministic_without_randomness():
    p = ChannelParams()
    rng = np.random.default_rng(0)
    csi = sample_csi(p, ScenarioSigmas(), 4.0, rng)
    assert csi.mean_signal == peak_signal(p)
    assert csi.mean_noise == peak_signal(p) / 4.0


def test_sample_csi_requires_positive_snr():
    with pytest.raises(ValueError):
        sample_csi(ChannelParams(), SCENARIOS[1], 0.0, np.random.default_rng(0))


def _reference_draws(p, sig, n, rng):
    # independent sampler: perturb, reject, closed-form peak
    nominal = np.array([p.diffusion, p.flow_parallel, p.flow_perp, p.enzyme_conc])
    rows = []
    while len(rows) < n:
        z = nominal * (1 + sig * rng.standard_normal(4))
        if z[0] > 0 and z[3] >= 0:
            rows.append(z)
    z = np.array(rows)
    A = p.reaction_rate * z[:, 3] + (z[:, 1] ** 2 + z[:, 2] ** 2) / (4 * z[:, 0])
    c = p.distance ** 2 / (4 * z[:, 0])
    t = (-1.5 + np.sqrt(2.25 + 4 * A * c)) / (2 * A)
    return (p.n_tx * p.receiver_volume / (4 * np.pi * z[:, 0] * t) ** 1.5
            * np.exp(-p.reaction_rate * z[:, 3] * t
                     - ((p.distance - z[:, 1] * t) ** 2 + (z[:, 2] * t) ** 2) / (4 * z[:, 0] * t)))


@pytest.mark.slow
def test_scenario1_matches_independent_sampler():
    p = ChannelParams()
    n = 100_000
    cs, _ = sample_csi_batch(p, SCENARIOS[1], 1.0, n, np.random.default_rng(11))
    ref = _reference_draws(p, SCENARIOS[1].as_array(), n, np.random.default_rng(12))
    se_mean = math.sqrt(cs.var() / n + ref.var() / n)
    assert abs(cs.mean() - ref.mean()) < 3 * se_mean

    def var_se(x):
        m4 = np.mean((x - x.mean()) ** 4)
        return (m4 - x.var() ** 2) / x.size

    se_var = math.sqrt(var_se(cs) + var_se(ref))
    assert abs(cs.var() - ref.var()) < 3 * se_var


def test_unit_snr_gives_equal_means():
    cs, cn = sample_csi_batch(ChannelParams(), SCENARIOS[2], 1.0, 40_000, np.random.default_rng(3))
    se = math.sqrt(cs.var() / cs.size + cn.var() / cn.size)
    assert abs(cs.mean() - cn.mean()) < 4 * se
    # noise is an independent draw, not a copy
    assert abs(np.corrcoef(cs, cn)[0, 1]) < 0.03


def test_draw_observations_zero_noise_zero_bits():
    r = draw_observations(Csi(7.0, 0.0), np.zeros(20, int), np.random.default_rng(0))
    assert np.all(r.counts == 0)


def test_draw_observations_mean_and_variance():
    n = 100_000
    r = draw_observations(Csi(5.0, 1.0), np.ones(n, int), np.random.default_rng(1))
    x = r.counts.astype(float)
    assert abs(x.mean() - 6.0) < 3 * math.sqrt(6.0 / n)
    # variance of the sample variance for Poisson(6): (mu4 - sigma^4) / n
    se_var = math.sqrt((6.0 + 3 * 36.0 - 36.0) / n)
    assert abs(x.var(ddof=1) - 6.0) < 5 * se_var


def test_draw_observations_reproducible():
    s = np.random.default_rng(5).integers(0, 2, 64)
    a = draw_observations(Csi(3.0, 0.5), s, np.random.default_rng(42)).counts
    b = draw_observations(Csi(3.0, 0.5), s, np.random.default_rng(42)).counts
    assert a.tobytes() == b.tobytes()


def test_draw_observations_small_means_are_exact_poisson():
    # a normal approximation would put mass on negative values and miss P{0}
    r = draw_observations(Csi(0.0, 0.05), np.zeros(200_000, int), np.random.default_rng(2))
    p0 = np.mean(r.counts == 0)
    assert abs(p0 - math.exp(-0.05)) < 4 * math.sqrt(p0 * (1 - p0) / r.K)


def test_observation_block_validation():
    with pytest.raises(ValueError):
        ObservationBlock([1, -1])
    with pytest.raises(ValueError):
        ObservationBlock([])
    with pytest.raises(ValueError):
        ObservationBlock([1.5, 2])
    assert ObservationBlock([1.0, 2.0]).counts.dtype == np.int64


@given(st.lists(st.integers(0, 500), min_size=1, max_size=30), st.data())
def test_observation_block_stats_partition(counts, data):
    bits = data.draw(st.lists(st.integers(0, 1), min_size=len(counts), max_size=len(counts)))
    n1, N1, N0 = ObservationBlock(counts).stats(bits)
    assert n1 == sum(bits)
    assert N1 + N0 == sum(counts)
    assert N1 == sum(c for c, b in zip(counts, bits) if b)


def test_isi_taps():
    p = ChannelParams()
    tm = peak_time(p)
    one = isi_taps(p, tm, 1)
    assert one.shape == (1,)
    assert one[0] == pytest.approx(peak_signal(p), rel=1e-12)
    taps = isi_taps(p, tm, 6)
    assert np.all(np.diff(taps) < 0)
    near = isi_taps(p, 2 * tm, 2)
    far = isi_taps(p, 10 * tm, 2)
    assert far[1] / far[0] < near[1] / near[0]
    with pytest.raises(ValueError):
        isi_taps(p, 0.0, 2)
    with pytest.raises(ValueError):
        isi_taps(p, tm, 0)


def test_expected_isi():
    assert expected_isi([1.0]) == 0.0
    assert expected_isi([1.0, 0.4, 0.2]) == pytest.approx(0.3)
    assert expected_isi([2.0, 0.0, 0.0]) == 0.0


def test_isi_observation_means():
    n = 50_000
    s = np.ones(n, int)
    r = draw_observations_with_isi([2.0, 1.0], 0.0, s, np.random.default_rng(4)).counts
    assert abs(r[1:].mean() - 3.0) < 4 * math.sqrt(3.0 / n)
    # cold start: the first symbol sees only its own tap
    lam = np.convolve(s[:3], [2.0, 1.0])[:3]
    assert lam.tolist() == [2.0, 3.0, 3.0]


def test_isi_single_tap_equals_isi_free():
    s = np.random.default_rng(8).integers(0, 2, 100)
    a = draw_observations_with_isi([4.0], 0.5, s, np.random.default_rng(9)).counts
    b = draw_observations(Csi(4.0, 0.5), s, np.random.default_rng(9)).counts
    assert np.array_equal(a, b)
