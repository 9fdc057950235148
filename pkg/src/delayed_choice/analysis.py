"""Time-tag analysis: arrival residuals, phase binning, count extraction, visibility."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .orbit import OutOfSpanError, PhysicalConstants, kinematic_phase, transmit_epoch
from .peaks import (
    FOUR_SIGMA_FRACTION,
    MIN_COUNTS,
    DegenerateHistogramError,
    PeakShape,
    fit_amplitudes,
    fit_peak_shape,
    fit_three_peaks,
)

N_PHASE_BINS = 10
PHASE_BIN_WIDTH = 2 * math.pi / N_PHASE_BINS
PHASE_LOW = -PHASE_BIN_WIDTH / 2


# --- arrival residuals -------------------------------------------------------

@dataclass(eq=False)
class DeltaResult:
    delta: np.ndarray  # t_meas - t_ref, NaN where unmatched
    t_tx: np.ndarray  # transmit epoch of the matched pulse
    matched: np.ndarray

    @property
    def n_unmatched(self) -> int:
        return int((~self.matched).sum())


def compute_delta(t_meas, track, pulse_rate: float = 1e8, gate: float | None = None,
                  tx_windows=None) -> DeltaResult:
    """Match each detection to the pulse with the nearest expected arrival.

    Candidate pulses lie on the clock grid n / pulse_rate, inside the track
    span and, if given, inside one of the ``tx_windows`` (N x 2 array).
    Detections farther than ``gate`` (default half the pulse period) from
    every candidate are flagged unmatched.
    """
    t_meas = np.asarray(t_meas, dtype=float)
    gate = 0.5 / pulse_rate if gate is None else gate
    lo, hi = track.span
    n0 = np.rint(transmit_epoch(t_meas, track) * pulse_rate)
    best_d = np.full(t_meas.shape, np.inf)
    best_tx = np.full(t_meas.shape, np.nan)
    for dn in (-1, 0, 1):
        t_tx = (n0 + dn) / pulse_rate
        ok = (t_tx >= lo) & (t_tx <= hi)
        if tx_windows is not None and len(tx_windows):
            w = np.asarray(tx_windows, dtype=float)
            i = np.searchsorted(w[:, 0], t_tx, side="right") - 1
            ok &= (i >= 0) & (t_tx <= w[np.clip(i, 0, None), 1])
        d = t_meas - (t_tx + track.rtt_at(np.clip(t_tx, lo, hi)))
        better = ok & (np.abs(d) < np.abs(best_d))
        best_d[better] = d[better]
        best_tx[better] = t_tx[better]
    matched = np.abs(best_d) <= gate
    delta = np.where(matched, best_d, np.nan)
    return DeltaResult(delta, np.where(matched, best_tx, np.nan), matched)


# --- histograms --------------------------------------------------------------

@dataclass(eq=False)
class DeltaHistogram:
    bin_width: float
    centers: np.ndarray
    counts: np.ndarray
    bit: int | None = None
    channel: str = "both"

    @property
    def edges(self) -> np.ndarray:
        return np.append(self.centers - self.bin_width / 2, self.centers[-1] + self.bin_width / 2)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def within(self, gate: float) -> tuple[np.ndarray, np.ndarray]:
        """(centers, counts) of bins lying entirely inside |delta| <= gate."""
        keep = np.abs(self.centers) + self.bin_width / 2 <= gate * (1 + 1e-9)
        return self.centers[keep], self.counts[keep]

    def __add__(self, other: "DeltaHistogram") -> "DeltaHistogram":
        if not np.array_equal(self.centers, other.centers):
            raise ValueError("histograms have different binning")
        channel = self.channel if self.channel == other.channel else "both"
        bit = self.bit if self.bit == other.bit else None
        return DeltaHistogram(self.bin_width, self.centers, self.counts + other.counts, bit, channel)


def histogram_centers(bin_width: float, delta_t: float) -> np.ndarray:
    m = int(math.floor(2 * delta_t / bin_width + 1e-9))
    return np.arange(-m, m + 1) * bin_width


def build_histogram(deltas, bin_width: float, delta_t: float = PhysicalConstants().delta_t,
                    bit: int | None = None, channel: str = "both") -> DeltaHistogram:
    """Fixed-width histogram over [-2 dt, 2 dt] with a bin centered on zero.

    ``bit`` and ``channel`` label the (already filtered) input.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    centers = histogram_centers(bin_width, delta_t)
    edges = np.append(centers - bin_width / 2, centers[-1] + bin_width / 2)
    d = np.asarray(deltas, dtype=float)
    counts, _ = np.histogram(d[np.isfinite(d)], bins=edges)
    return DeltaHistogram(bin_width, centers, counts.astype(float), bit, channel)


# --- phases ------------------------------------------------------------------

def wrap_phase(phi):
    """Reduce into [-pi/10, 2 pi - pi/10) so bin 0 straddles zero."""
    out = np.mod(np.asarray(phi, dtype=float) - PHASE_LOW, 2 * math.pi) + PHASE_LOW
    return float(out) if out.ndim == 0 else out


def phase_bin(phi) -> np.ndarray:
    """Index j of the interval [(2j-1) pi/10, (2j+1) pi/10) holding phi mod 2 pi."""
    j = np.floor((wrap_phase(phi) - PHASE_LOW) / PHASE_BIN_WIDTH).astype(int)
    return np.clip(j, 0, N_PHASE_BINS - 1)


def phase_bin_centers() -> np.ndarray:
    return np.arange(N_PHASE_BINS) * PHASE_BIN_WIDTH


def phase_of_record(t_tx, slr_track, constants: PhysicalConstants | None = None):
    """Kinematic phase (wrapped) from the SLR Doppler estimate at reflection.

    The reflection epoch of a pulse sent at t_tx is t_tx + rtt/2.
    """
    constants = constants or slr_track.constants
    t_tx = np.asarray(t_tx, dtype=float)
    t_reflect = t_tx + 0.5 * slr_track.rtt_at(t_tx)
    return wrap_phase(kinematic_phase(slr_track.beta_at(t_reflect), constants))


# --- counts ------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelCounts:
    n_plus: float  # background removed, efficiency renormalized
    n_minus: float
    err_plus: float
    err_minus: float
    raw_plus: float  # background-removed peak areas before renormalization
    raw_minus: float
    shape: PeakShape


def extract_counts(hist_plus: DeltaHistogram, hist_minus: DeltaHistogram, bit: int,
                   efficiencies: tuple[float, float] = (1.0, 1.0), shape: PeakShape | None = None,
                   delta_t: float = PhysicalConstants().delta_t, jitter: float = 0.5e-9,
                   gate: float = 5e-9) -> ChannelCounts:
    """Background-subtracted, efficiency-renormalized peak counts per detector.

    Counts are divided by each detector's efficiency relative to the mean of
    the two, so a common efficiency factor cancels and the totals stay on the
    scale of detected photons.

    b=0 uses one Gaussian, b=1 two lateral Gaussians, both with common width
    and a flat background per channel. Without ``shape`` the centers and
    width are first fitted on the two channels summed; areas and backgrounds
    are then solved per channel at that shape. Only bins inside the pulse
    matching gate are used.
    """
    total = hist_plus.total + hist_minus.total
    if total < MIN_COUNTS:
        raise DegenerateHistogramError(f"only {total} counts (< {MIN_COUNTS})")
    x, c_plus = hist_plus.within(gate)
    _, c_minus = hist_minus.within(gate)
    bw = hist_plus.bin_width
    if shape is None:
        shape = fit_peak_shape(x, c_plus + c_minus, bit, bw, delta_t, jitter)
    amp_p = fit_amplitudes(x, c_plus, shape, bw)
    amp_m = fit_amplitudes(x, c_minus, shape, bw)
    eta_p, eta_m = np.asarray(efficiencies, dtype=float) / float(np.mean(efficiencies))
    return ChannelCounts(
        n_plus=amp_p.total / eta_p, n_minus=amp_m.total / eta_m,
        err_plus=amp_p.total_err / eta_p, err_minus=amp_m.total_err / eta_m,
        raw_plus=amp_p.total, raw_minus=amp_m.total, shape=shape,
    )


def relative_frequencies(n_plus: float, n_minus: float) -> tuple[float, float, float]:
    """f+/- = N+/-/(N+ + N-) with binomial error sqrt(f+ f- / N)."""
    n_plus, n_minus = max(n_plus, 0.0), max(n_minus, 0.0)
    n = n_plus + n_minus
    if n <= 0:
        raise ValueError("zero total counts")
    f_plus = n_plus / n
    f_minus = 1.0 - f_plus
    return f_plus, f_minus, math.sqrt(f_plus * f_minus / n)


@dataclass(frozen=True)
class PhaseBinStats:
    j: int
    phi_center: float
    n_plus: float
    n_minus: float
    f_plus: float
    f_minus: float
    sigma_f: float

    @property
    def interval(self) -> tuple[float, float]:
        return ((2 * self.j - 1) * math.pi / 10, (2 * self.j + 1) * math.pi / 10)

    @property
    def degenerate(self) -> bool:
        return self.sigma_f == 0.0

    @classmethod
    def from_counts(cls, j: int, n_plus: float, n_minus: float) -> "PhaseBinStats":
        f_plus, f_minus, sigma = relative_frequencies(n_plus, n_minus)
        return cls(j, j * PHASE_BIN_WIDTH, n_plus, n_minus, f_plus, f_minus, sigma)


# --- visibility --------------------------------------------------------------

@dataclass(frozen=True)
class VisibilityFit:
    v_exp: float
    sigma_v: float  # from the curvature of the weighted least squares
    sigma_v_scatter: float  # sigma_v scaled by sqrt(chi2/dof)
    phi: np.ndarray
    sigma_f: np.ndarray
    residuals: np.ndarray  # shape (n_bins, 2): f_obs - f_model for (+, -)
    chi2: float
    dof: int

    @property
    def sigma_r(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2))) if self.residuals.size else 0.0


def fit_visibility(bins) -> VisibilityFit:
    """Fit f+ = (1 + V cos phi)/2 over phase bins; only V is free.

    Closed-form weighted least squares with w = 1/sigma_f^2 at the bin
    centers. Bins without counts or with zero error are skipped.
    """
    used = [b for b in bins if (b.n_plus + b.n_minus) > 0 and b.sigma_f > 0]
    if len(used) < 3:
        raise ValueError(f"need >= 3 usable phase bins, got {len(used)}")
    phi = np.array([b.phi_center for b in used])
    f_plus = np.array([b.f_plus for b in used])
    f_minus = np.array([b.f_minus for b in used])
    sigma = np.array([b.sigma_f for b in used])
    w = 1.0 / sigma**2
    cos = np.cos(phi)
    denom = float(np.sum(w * cos**2))
    if denom == 0:
        raise ValueError("all weights vanish")
    v = float(np.sum(w * (2 * f_plus - 1) * cos) / denom)
    # d f+/dV = cos/2, so the curvature is sum(w cos^2)/4
    sigma_v = 2.0 / math.sqrt(denom)
    model = 0.5 * (1 + v * cos)
    res = np.column_stack([f_plus - model, f_minus - (1 - model)])
    chi2 = float(np.sum(w * res[:, 0] ** 2))
    dof = len(used) - 1
    scatter = sigma_v * math.sqrt(chi2 / dof) if dof > 0 else float("nan")
    return VisibilityFit(v, sigma_v, scatter, phi, sigma, res, chi2, dof)


def residual_stats(fit: VisibilityFit, k: float = 1.5) -> tuple[float, float]:
    """(RMS of residuals over both channels, fraction within +/- k * mean error)."""
    if fit.residuals.size == 0:
        return 0.0, 1.0
    bound = k * float(np.mean(fit.sigma_f))
    return fit.sigma_r, float(np.mean(np.abs(fit.residuals) <= bound))


def flatness(bins, expected: float = 0.5) -> tuple[float, int, float]:
    """(chi2, dof, max |z|) of f+ against a constant ``expected``."""
    used = [b for b in bins if b.sigma_f > 0]
    if not used:
        raise ValueError("no usable phase bins")
    z = np.array([(b.f_plus - expected) / b.sigma_f for b in used])
    return float(np.sum(z**2)), len(used), float(np.max(np.abs(z)))


# --- which-path, bounds, rates -----------------------------------------------

@dataclass(frozen=True)
class WhichPathStats:
    p_wp: float
    sigma_p: float
    n_early: float
    n_central: float
    n_late: float
    separation: float
    sigma: float


def which_path_probability(hist: DeltaHistogram, delta_t: float = PhysicalConstants().delta_t,
                           jitter: float = 0.5e-9, gate: float = 5e-9) -> WhichPathStats:
    """Lateral-to-total ratio of b=1 peak areas, each integrated over +/-4 sigma."""
    x, counts = hist.within(gate)
    fit = fit_three_peaks(x, counts, hist.bin_width, delta_t, jitter)
    n_early, n_central, n_late = (a * FOUR_SIGMA_FRACTION for a in fit.areas)
    n = n_early + n_central + n_late
    if n <= 0:
        raise DegenerateHistogramError("no peak area in which-path histogram")
    p = (n_early + n_late) / n
    return WhichPathStats(p, math.sqrt(p * (1 - p) / n), n_early, n_central, n_late,
                          fit.centers[2] - fit.centers[0], fit.sigma)


def classical_bound_significance(v_exp: float, sigma_v: float, p_wp: float) -> float:
    """Distance in sigma of V from the best visibility a classical particle allows (1 - p_wp)."""
    if sigma_v <= 0:
        raise ValueError("sigma_v must be positive")
    return (v_exp - (1.0 - p_wp)) / sigma_v


def estimate_mu(detection_rate: float, accepted_pulse_rate: float, eta_opt: float, eta_det: float) -> float:
    """Mean photon number per pulse at the primary mirror from the detection rate."""
    if detection_rate < 0:
        raise ValueError("detection_rate must be >= 0")
    denom = accepted_pulse_rate * eta_opt * eta_det
    if denom <= 0:
        raise ValueError("accepted_pulse_rate, eta_opt and eta_det must be positive")
    return detection_rate / denom


def count_balance(n_central_b0: float, n_lateral_b1: float,
                  exposure_b0: float = 1.0, exposure_b1: float = 1.0) -> float:
    """z-score of the per-pulse rates of the b=0 central peak and the b=1 lateral peaks."""
    r0, r1 = n_central_b0 / exposure_b0, n_lateral_b1 / exposure_b1
    var = max(n_central_b0, 0) / exposure_b0**2 + max(n_lateral_b1, 0) / exposure_b1**2
    if var <= 0:
        raise ValueError("no counts")
    return (r0 - r1) / math.sqrt(var)
