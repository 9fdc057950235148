import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from delayed_choice.analysis import (
    N_PHASE_BINS,
    PhaseBinStats,
    VisibilityFit,
    build_histogram,
    classical_bound_significance,
    compute_delta,
    count_balance,
    estimate_mu,
    extract_counts,
    fit_visibility,
    flatness,
    phase_bin,
    phase_bin_centers,
    phase_of_record,
    relative_frequencies,
    residual_stats,
    which_path_probability,
    wrap_phase,
)
from delayed_choice.orbit import PassProfile, generate_pass, predicted_arrival, simulate_slr_track
from delayed_choice.peaks import DegenerateHistogramError, PeakShape, fit_amplitudes

DT = 3.498e-9
RES = 81e-12
BW = 162e-12


def quantize(t):
    return np.rint(t / RES) * RES


def hist_from_samples(samples, bit=None, channel="both"):
    return build_histogram(samples, BW, DT, bit, channel)


# --- compute_delta -------------------------------------------------------------

@pytest.fixture(scope="module")
def matched(starlette_track):
    rng = np.random.default_rng(1)
    n = rng.integers(100 * 10**8, 200 * 10**8, 500)
    t_tx = n / 1e8
    return t_tx, predicted_arrival(t_tx, starlette_track)


def test_delta_central_within_quantization(matched, starlette_track):
    t_tx, t_ref = matched
    d = compute_delta(quantize(t_ref), starlette_track)
    assert d.matched.all()
    assert np.max(np.abs(d.delta)) <= RES / 2 + 1e-15
    np.testing.assert_allclose(d.t_tx, t_tx, rtol=0, atol=1e-12)


def test_delta_late_slot(matched, starlette_track):
    _, t_ref = matched
    d = compute_delta(quantize(t_ref + DT), starlette_track)
    assert np.max(np.abs(d.delta - DT)) <= RES / 2 + 1e-15


def test_delta_unmatched_outside_gate(matched, starlette_track):
    _, t_ref = matched
    # 6 ns off every expected arrival when pulses exist only on a 1 ms grid
    t_tx = np.round(matched[0], 3)
    d = compute_delta(predicted_arrival(t_tx, starlette_track) + 6e-9, starlette_track,
                      tx_windows=np.column_stack([t_tx, t_tx]))
    assert d.n_unmatched == len(t_tx)
    assert np.all(np.isnan(d.delta))


# --- histograms ----------------------------------------------------------------

def test_empty_histogram():
    h = hist_from_samples([])
    assert h.total == 0 and len(h.counts) == 87
    assert h.centers[43] == 0.0
    assert h.edges[0] == pytest.approx(-2 * DT, abs=BW)


def test_histogram_rejects_bad_width():
    with pytest.raises(ValueError):
        build_histogram([0.0], 0.0)


def test_histogram_modes():
    rng = np.random.default_rng(2)
    h0 = hist_from_samples(rng.normal(0, 0.5e-9, 5000))
    assert abs(h0.centers[np.argmax(h0.counts)]) <= 2 * BW
    h1 = hist_from_samples(rng.choice([-DT, DT], 5000) + rng.normal(0, 0.5e-9, 5000))
    left, right = h1.centers < 0, h1.centers > 0
    assert h1.centers[left][np.argmax(h1.counts[left])] == pytest.approx(-DT, abs=3 * BW)
    assert h1.centers[right][np.argmax(h1.counts[right])] == pytest.approx(DT, abs=3 * BW)
    assert h1.counts[43] < 0.1 * h1.counts.max()


def test_histogram_sum_checks_binning():
    a = hist_from_samples([0.0], 0, "+")
    assert (a + hist_from_samples([1e-9], 0, "-")).total == 2
    with pytest.raises(ValueError):
        a + build_histogram([0.0], 2 * BW)


# --- phases --------------------------------------------------------------------

def test_phase_wrap_examples():
    assert phase_bin(2 * math.pi - 0.01) == 0
    assert phase_bin(0.01) == 0
    assert phase_bin(math.pi / 10 + 1e-9) == 1
    assert phase_bin(-math.pi / 10) == 0
    assert wrap_phase(2 * math.pi - 0.01) == pytest.approx(-0.01)


@given(st.floats(min_value=-1e3, max_value=1e3))
def test_phase_bin_total_and_consistent(phi):
    j = int(phase_bin(phi))
    assert 0 <= j < N_PHASE_BINS
    lo, hi = (2 * j - 1) * math.pi / 10, (2 * j + 1) * math.pi / 10
    w = wrap_phase(phi)
    assert lo - 1e-9 <= w < hi + 1e-9


def test_phase_bin_centers():
    np.testing.assert_allclose(phase_bin_centers(), np.arange(10) * math.pi / 5)


def test_phase_zero_for_stationary_satellite():
    track = generate_pass(PassProfile(1000e3, 1500e3, 2.0))
    mid = track.t[len(track) // 2]
    flat = simulate_slr_track(track)
    flat.delta_t_rx[:] = flat.delta_t_tx
    t = np.linspace(mid - 0.5, mid + 0.5, 11)
    assert np.all(phase_of_record(t, flat) == 0.0)


def test_phase_estimate_close_to_truth(starlette_track):
    slr = simulate_slr_track(starlette_track)
    t_tx = np.linspace(5.0, 280.0, 2001)
    est = phase_of_record(t_tx, slr)
    true = starlette_track.phi_at(t_tx + 0.5 * starlette_track.rtt_at(t_tx))
    err = np.angle(np.exp(1j * (est - true)))
    assert np.max(np.abs(err)) < 0.1


# --- counts ------------------------------------------------------------------

def test_relative_frequency_examples():
    assert relative_frequencies(50, 50)[:2] == (0.5, 0.5)
    f_plus, f_minus, s = relative_frequencies(300, 700)
    assert f_plus == pytest.approx(0.30) and f_minus == pytest.approx(0.70)
    assert s == pytest.approx(0.0145, abs=5e-5)
    f_plus, _, s = relative_frequencies(40, 0)
    assert f_plus == 1.0 and s == 0.0
    assert PhaseBinStats.from_counts(0, 40, 0).degenerate
    with pytest.raises(ValueError):
        relative_frequencies(0, 0)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_frequencies_sum_to_one(a, b):
    if a + b <= 0:
        return
    f_plus, f_minus, s = relative_frequencies(a, b)
    assert f_plus + f_minus == 1.0
    assert 0 <= f_plus <= 1 and s >= 0


def test_gaussian_area_recovered():
    rng = np.random.default_rng(3)
    h = hist_from_samples(rng.normal(0.1e-9, 0.5e-9, 10_000))
    c = extract_counts(h, hist_from_samples([]), 0, shape=None)
    assert c.raw_plus == pytest.approx(10_000, rel=0.02)
    assert c.shape.sigma == pytest.approx(0.5e-9, rel=0.05)
    assert c.shape.centers[0] == pytest.approx(0.1e-9, abs=0.02e-9)


def test_symmetric_channels_balance():
    rng = np.random.default_rng(4)
    hp = hist_from_samples(rng.normal(0, 0.5e-9, rng.poisson(3000)), 0, "+")
    hm = hist_from_samples(rng.normal(0, 0.5e-9, rng.poisson(3000)), 0, "-")
    c = extract_counts(hp, hm, 0, (0.1, 0.1))
    assert abs(c.n_plus - c.n_minus) < 3 * math.hypot(c.err_plus, c.err_minus)


def test_background_only_area_consistent_with_zero():
    rng = np.random.default_rng(5)
    h = hist_from_samples(rng.uniform(-5e-9, 5e-9, 3000))
    amp = fit_amplitudes(*h.within(5e-9), PeakShape.nominal(0, DT, 0.5e-9), BW)
    assert amp.total < 3 * max(amp.total_err, 1.0)
    assert amp.background == pytest.approx(3000 * BW / 10e-9, rel=0.1)


def test_extract_counts_invariant_under_efficiency_scale():
    rng = np.random.default_rng(6)
    hp = hist_from_samples(np.concatenate([rng.normal(0, 0.5e-9, 800), rng.uniform(-5e-9, 5e-9, 300)]))
    hm = hist_from_samples(np.concatenate([rng.normal(0, 0.5e-9, 400), rng.uniform(-5e-9, 5e-9, 300)]))
    a = extract_counts(hp, hm, 0, (0.1, 0.05))
    b = extract_counts(hp, hm, 0, (0.3, 0.15))
    assert a.n_plus == pytest.approx(b.n_plus, rel=1e-12)
    assert a.n_minus == pytest.approx(b.n_minus, rel=1e-12)
    # the weaker detector is scaled up relative to the stronger one
    assert a.n_minus / a.raw_minus == pytest.approx(2 * a.n_plus / a.raw_plus)


def test_degenerate_histogram_rejected():
    with pytest.raises(DegenerateHistogramError):
        extract_counts(hist_from_samples(np.zeros(20)), hist_from_samples(np.zeros(20)), 0)


def test_b1_counts_exclude_central_leakage():
    rng = np.random.default_rng(7)
    lateral = rng.choice([-DT, DT], 9000) + rng.normal(0, 0.5e-9, 9000)
    central = rng.normal(0, 0.5e-9, 1000)
    h = hist_from_samples(np.concatenate([lateral, central]))
    c = extract_counts(h, hist_from_samples([]), 1)
    assert c.raw_plus == pytest.approx(9000, abs=3 * math.sqrt(9000) + 50)
    assert c.shape.separation == pytest.approx(2 * DT, abs=0.05e-9)


# --- visibility ----------------------------------------------------------------

def ideal_bins(v, n=1000):
    phi = phase_bin_centers()
    f = 0.5 * (1 + v * np.cos(phi))
    return [PhaseBinStats.from_counts(j, n * f[j], n * (1 - f[j])) for j in range(10)]


def test_visibility_noiseless_exact():
    fit = fit_visibility(ideal_bins(0.4))
    assert abs(fit.v_exp - 0.4) < 1e-12
    assert fit.sigma_r < 1e-12 and fit.chi2 < 1e-20


@given(st.floats(-1, 1), st.integers(50, 10**6))
@settings(max_examples=50)
def test_visibility_closed_form_any_v(v, n):
    assert abs(fit_visibility(ideal_bins(v, n)).v_exp - v) < 1e-12


def test_visibility_zero_residuals_match_sigma():
    """Flat data: residual RMS follows sigma * chi(9)/sqrt(10) since V absorbs one dof."""
    rng = np.random.default_rng(8)
    n = 2000
    rms = []
    for _ in range(1000):
        k = rng.binomial(n, 0.5, 10)
        fit = fit_visibility([PhaseBinStats.from_counts(j, k[j], n - k[j]) for j in range(10)])
        rms.append(fit.sigma_r)
    chi9_mean = math.sqrt(2) * math.gamma(5) / math.gamma(4.5)
    assert np.mean(rms) == pytest.approx(math.sqrt(0.25 / n) * chi9_mean / math.sqrt(10), rel=0.02)


def test_visibility_needs_three_bins():
    with pytest.raises(ValueError):
        fit_visibility(ideal_bins(0.4)[:2])


def test_sigma_v_from_curvature():
    bins = ideal_bins(0.0, 1000)
    w = np.array([1 / b.sigma_f**2 for b in bins])
    expected = 2 / math.sqrt(np.sum(w * np.cos(phase_bin_centers()) ** 2))
    assert fit_visibility(bins).sigma_v == pytest.approx(expected, rel=1e-12)


# --- residuals -----------------------------------------------------------------

def test_residual_stats_zero():
    sigma_r, frac = residual_stats(fit_visibility(ideal_bins(0.3)))
    assert sigma_r < 1e-12 and frac == 1.0


def test_residual_rms_chi_quantiles():
    """RMS of 20 N(0, 0.05) residuals falls in [0.035, 0.065] with the chi(20) probability."""
    p_band = stats.chi2.cdf(20 * 1.3**2, 20) - stats.chi2.cdf(20 * 0.7**2, 20)
    assert p_band == pytest.approx(0.944, abs=1e-3)
    rng = np.random.default_rng(9)
    inside = []
    for _ in range(4000):
        k = 0.5 + rng.normal(0, 0.05, 10)
        fit = VisibilityFit(0.0, 1.0, 1.0, np.zeros(10), np.full(10, 0.05),
                            np.column_stack([k - 0.5, 0.5 - k]), 0.0, 9)
        inside.append(0.035 <= residual_stats(fit)[0] <= 0.065)
    # residual pairs are +/- copies, so 10 independent draws and a chi(10) band
    p10 = stats.chi2.cdf(10 * 1.3**2, 10) - stats.chi2.cdf(10 * 0.7**2, 10)
    assert np.mean(inside) == pytest.approx(p10, abs=0.02)


def test_residual_coverage_normal():
    expected = stats.norm.cdf(1.5) - stats.norm.cdf(-1.5)
    assert expected == pytest.approx(0.866, abs=1e-3)
    rng = np.random.default_rng(10)
    n = 200_000
    k = rng.binomial(n, 0.5, 10)
    fits = [fit_visibility([PhaseBinStats.from_counts(j, k[j], n - k[j]) for j in range(10)])]
    for _ in range(199):
        k = rng.binomial(n, 0.5, 10)
        fits.append(fit_visibility([PhaseBinStats.from_counts(j, k[j], n - k[j]) for j in range(10)]))
    frac = np.mean([residual_stats(f)[1] for f in fits])
    # one parameter fitted out of ten points shrinks residuals slightly
    assert frac == pytest.approx(expected, abs=0.03)


def test_flatness_of_balanced_bins():
    chi2, dof, max_z = flatness(ideal_bins(0.0))
    assert chi2 == 0.0 and dof == 10 and max_z == 0.0
    with pytest.raises(ValueError):
        flatness([PhaseBinStats.from_counts(0, 10, 0)])


# --- which-path, bound, rates --------------------------------------------------

def test_which_path_no_central_area():
    rng = np.random.default_rng(11)
    h = hist_from_samples(rng.choice([-DT, DT], 4000) + rng.normal(0, 0.5e-9, 4000), 1)
    wp = which_path_probability(h)
    assert wp.p_wp == pytest.approx(1.0, abs=2e-3)
    assert wp.separation == pytest.approx(2 * DT, abs=0.05e-9)


def test_which_path_ratio():
    rng = np.random.default_rng(12)
    n = 20_000
    slot = rng.choice([-1, 0, 1], n, p=[0.475, 0.05, 0.475])
    samples = slot * DT + rng.normal(0, 0.5e-9, n)
    samples = np.concatenate([samples, rng.uniform(-5e-9, 5e-9, 2000)])
    wp = which_path_probability(hist_from_samples(samples, 1))
    # compare with the realized slot fraction, not the generating probability
    assert abs(wp.p_wp - np.mean(slot != 0)) < 3 * wp.sigma_p
    assert abs(wp.p_wp - 0.95) < 5 * wp.sigma_p


def test_which_path_degenerate():
    with pytest.raises(DegenerateHistogramError):
        which_path_probability(hist_from_samples([0.0] * 10, 1))


@pytest.mark.parametrize("p_wp,z", [(0.95, 8.75), (0.91, 7.75)])
def test_classical_bound_examples(p_wp, z):
    assert classical_bound_significance(0.40, 0.04, p_wp) == pytest.approx(z, abs=1e-12)


def test_classical_bound_saturation():
    assert classical_bound_significance(0.05, 0.04, 0.95) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        classical_bound_significance(0.4, 0.0, 0.9)


def test_estimate_mu():
    assert estimate_mu(0.0, 1e8, 0.13, 0.1) == 0.0
    assert estimate_mu(2.2e-3 * 1e8 * 0.13 * 0.1, 1e8, 0.13, 0.1) == pytest.approx(2.2e-3)
    with pytest.raises(ValueError):
        estimate_mu(1.0, 0.0, 0.13, 0.1)


def test_count_balance():
    assert count_balance(1000, 1000) == 0.0
    assert count_balance(1000, 1000, 1.0, 2.0) > 0
    assert count_balance(1100, 1000) == pytest.approx(100 / math.sqrt(2100))
    with pytest.raises(ValueError):
        count_balance(0, 0)
