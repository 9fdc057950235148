"""Peak fitting on detection-time histograms.

Model counts per bin as ``area * bin_width * pdf(x) + background`` so fitted
areas are directly counts. Shape fits (centers, width) are nonlinear and use
Poisson-motivated weights max(count, 1). Amplitude extraction with a known
shape is linear in the areas and solved as a bounded Poisson maximum-likelihood
fit, which stays efficient at the handful-of-counts-per-bin level of a single
phase bin.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import curve_fit, minimize
from scipy.signal import find_peaks
from scipy.special import erf
from scipy.stats import exponnorm

MIN_COUNTS = 50
NS = 1e9  # nonlinear fits run in nanoseconds for conditioning
FOUR_SIGMA_FRACTION = float(erf(4 / math.sqrt(2)))


class FitError(RuntimeError):
    """A peak fit failed to converge; ``diagnostics`` carries the context."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateHistogramError(ValueError):
    pass


class UnresolvedPeaksError(ValueError):
    pass


def gauss_bins(x, area, center, sigma, bin_width):
    z = (x - center) / sigma
    return area * bin_width * np.exp(-0.5 * z * z) / (sigma * math.sqrt(2 * math.pi))


def _weights(counts):
    return np.sqrt(np.maximum(counts, 1.0))


def _outer_median(counts, n_outer=5):
    edge = np.concatenate([counts[:n_outer], counts[-n_outer:]])
    return float(np.median(edge)) if len(edge) else 0.0


@dataclass(frozen=True)
class PeakShape:
    """Peak centers (s) sharing a common Gaussian width.

    ``nuisance`` centers are fitted alongside but their areas are not counted
    (the b=1 central leakage peak).
    """

    centers: tuple[float, ...]
    sigma: float
    sigma_err: float = float("nan")
    center_errs: tuple[float, ...] = ()
    nuisance: tuple[float, ...] = ()

    @classmethod
    def nominal(cls, bit: int, delta_t: float, jitter: float) -> "PeakShape":
        if bit == 0:
            return cls((0.0,), jitter)
        return cls((-delta_t, delta_t), jitter, nuisance=(0.0,))

    @property
    def separation(self) -> float:
        return self.centers[-1] - self.centers[0]


def fit_peak_shape(x, counts, bit: int, bin_width: float, delta_t: float, jitter: float) -> PeakShape:
    """Nonlinear fit of one (b=0) or two (b=1) Gaussians with common width plus flat background.

    For b=1 a third Gaussian at the midpoint of the lateral pair absorbs the
    central leakage. Initialization: b=0 center at the histogram maximum, b=1
    centers at +/-delta_t; width at ``jitter``; background at the median of
    the outer bins.
    """
    x = np.asarray(x, float) * NS
    bin_width, delta_t, jitter = bin_width * NS, delta_t * NS, jitter * NS
    counts = np.asarray(counts, float)
    total = counts.sum()
    if total < MIN_COUNTS:
        raise DegenerateHistogramError(f"only {total:.0f} counts (< {MIN_COUNTS})")
    c0 = _outer_median(counts)
    signal = max(total - c0 * len(counts), 1.0)
    if bit == 0:
        p0 = [signal, x[np.argmax(counts)], jitter, c0]

        def model(x, a, m, s, c):
            return gauss_bins(x, a, m, s, bin_width) + c
    else:
        p0 = [signal * 0.45, -delta_t, signal * 0.45, delta_t, jitter, c0, signal * 0.1]

        def model(x, a1, m1, a2, m2, s, c, a0):
            return (gauss_bins(x, a1, m1, s, bin_width) + gauss_bins(x, a2, m2, s, bin_width)
                    + gauss_bins(x, a0, 0.5 * (m1 + m2), s, bin_width) + c)
    try:
        popt, pcov = curve_fit(model, x, counts, p0=p0, sigma=_weights(counts),
                               absolute_sigma=True, maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"peak shape fit did not converge: {exc}", {"p0": p0, "total": total}) from exc
    # PeakShape keeps only the time-valued entries
    popt, errs = popt / NS, np.sqrt(np.clip(np.diag(pcov), 0, None)) / NS
    if bit == 0:
        return PeakShape((popt[1],), abs(popt[2]), errs[2], (errs[1],))
    return PeakShape((popt[1], popt[3]), abs(popt[4]), errs[4], (errs[1], errs[3]),
                     nuisance=(0.5 * (popt[1] + popt[3]),))


@dataclass(frozen=True)
class Amplitudes:
    areas: np.ndarray  # one per counted peak
    background: float  # counts per bin
    cov: np.ndarray  # covariance of the counted areas

    @property
    def total(self) -> float:
        return float(self.areas.sum())

    @property
    def total_err(self) -> float:
        return float(math.sqrt(max(self.cov.sum(), 0.0)))


def fit_amplitudes(x, counts, shape: PeakShape, bin_width: float) -> Amplitudes:
    """Poisson maximum likelihood for peak areas and flat background at fixed shape.

    The negative log-likelihood is convex in the (non-negative) coefficients,
    so a bounded quasi-Newton solve finds the global optimum. Errors come from
    the inverse Fisher information over the coefficients off the bound.
    """
    x = np.asarray(x, float)
    counts = np.asarray(counts, float)
    cols = [gauss_bins(x, 1.0, m, shape.sigma, bin_width) for m in shape.centers + shape.nuisance]
    design = np.column_stack(cols + [np.ones_like(x)])
    # work in units where every column sums to one so coefficients are counts
    scale = design.sum(axis=0)
    design = design / scale
    total = max(counts.sum(), 1.0)

    def nll(coef):
        mu = np.maximum(design @ coef, 1e-12)
        return (mu.sum() - counts @ np.log(mu)) / total, (design.sum(axis=0) - design.T @ (counts / mu)) / total

    start, *_ = np.linalg.lstsq(design, counts, rcond=None)
    start = np.maximum(start, 0.1)
    sol = minimize(nll, start, jac=True, method="L-BFGS-B", bounds=[(0.0, None)] * len(start),
                   options={"ftol": 1e-14, "gtol": 1e-10, "maxiter": 2000})
    coef = sol.x
    mu = np.maximum(design @ coef, 1e-12)
    free = coef > 1e-9 * total
    cov = np.zeros((len(coef), len(coef)))
    fisher = design[:, free].T @ (design[:, free] / mu[:, None])
    cov[np.ix_(free, free)] = np.linalg.pinv(fisher)
    n = len(shape.centers)
    return Amplitudes(coef[:n], float(coef[-1] / scale[-1]), cov[:n, :n])


@dataclass(frozen=True)
class ThreePeakFit:
    areas: tuple[float, float, float]  # early, central, late
    centers: tuple[float, float, float]
    sigma: float
    background: float


def fit_three_peaks(x, counts, bin_width: float, delta_t: float, jitter: float) -> ThreePeakFit:
    """Lateral peaks at free centers, a central peak at their midpoint, common width.

    Centers and width come from a bounded nonlinear fit; the areas are then
    re-solved by Poisson likelihood at that shape, since the count-weighted
    fit pulls the small central peak low.
    """
    xs = np.asarray(x, float) * NS
    bw, dt, jit = bin_width * NS, delta_t * NS, jitter * NS
    counts = np.asarray(counts, float)
    total = counts.sum()
    if total < MIN_COUNTS:
        raise DegenerateHistogramError(f"only {total:.0f} counts (< {MIN_COUNTS})")
    c0 = _outer_median(counts)
    signal = max(total - c0 * len(counts), 1.0)

    def model(x, a1, a0, a2, m1, m2, s, c):
        return (gauss_bins(x, a1, m1, s, bw) + gauss_bins(x, a0, 0.5 * (m1 + m2), s, bw)
                + gauss_bins(x, a2, m2, s, bw) + c)

    p0 = [signal * 0.45, signal * 0.1, signal * 0.45, -dt, dt, jit, max(c0, 0.0)]
    lo = [0, 0, 0, -2 * dt, 0, jit / 20, 0]
    hi = [np.inf, np.inf, np.inf, 0, 2 * dt, 4 * dt, np.inf]
    try:
        popt, _ = curve_fit(model, xs, counts, p0=p0, sigma=_weights(counts), bounds=(lo, hi), maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"three-peak fit did not converge: {exc}", {"p0": p0, "total": total}) from exc
    m1, m2, s = popt[3] / NS, popt[4] / NS, popt[5] / NS
    mid = 0.5 * (m1 + m2)
    amps = fit_amplitudes(x, counts, PeakShape((m1, mid, m2), s), bin_width)
    a1, a0, a2 = (float(a) for a in amps.areas)
    return ThreePeakFit((a1, a0, a2), (m1, mid, m2), s, amps.background)


# --- exponentially modified Gaussian (MZI unbalance calibration) -----------

@dataclass(frozen=True)
class EmgFit:
    loc: float
    loc_err: float
    sigma: float
    tail: float  # exponential time constant
    area: float


def emg_bins(x, area, loc, sigma, tail, bin_width):
    k = max(tail / sigma, 1e-4)
    return area * bin_width * exponnorm.pdf(x, k, loc=loc, scale=sigma)


def fit_emg_peak(x, counts, bin_width: float) -> EmgFit:
    x = np.asarray(x, float) * NS
    bin_width = bin_width * NS
    counts = np.asarray(counts, float)
    total = counts.sum()
    if total < MIN_COUNTS:
        raise DegenerateHistogramError(f"only {total:.0f} counts (< {MIN_COUNTS})")
    mean = float(np.sum(x * counts) / total)
    std = float(math.sqrt(max(np.sum((x - mean) ** 2 * counts) / total, bin_width**2)))
    p0 = [total, x[np.argmax(counts)], 0.7 * std, 0.5 * std]
    lo = [0, x[0], bin_width / 10, std * 1e-4]
    hi = [np.inf, x[-1], 10 * std, 10 * std]

    def model(x, area, loc, sigma, tail):
        return emg_bins(x, area, loc, sigma, tail, bin_width)

    try:
        popt, pcov = curve_fit(model, x, counts, p0=p0, sigma=_weights(counts), bounds=(lo, hi), maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"EMG fit did not converge: {exc}", {"p0": p0}) from exc
    loc_err = math.sqrt(max(pcov[1, 1], 0.0)) / NS
    return EmgFit(popt[1] / NS, loc_err, popt[2] / NS, popt[3] / NS, popt[0])


def unbalance_from_peaks(first: EmgFit, second: EmgFit) -> tuple[float, float]:
    return second.loc - first.loc, math.hypot(first.loc_err, second.loc_err)


def estimate_unbalance(x, counts, bin_width: float, min_separation: float | None = None) -> tuple[float, float]:
    """Time separation of the two peaks of a calibration histogram, with 1-sigma error.

    Each peak is fitted separately, on the bins either side of the count
    minimum between the two maxima.
    """
    x = np.asarray(x, float)
    counts = np.asarray(counts, float)
    smooth = np.convolve(counts, np.ones(5) / 5, mode="same")
    distance = max(int((min_separation or 0) / bin_width), 1)
    peaks, _ = find_peaks(smooth, prominence=0.2 * smooth.max(), distance=distance)
    if len(peaks) < 2:
        raise UnresolvedPeaksError(f"found {len(peaks)} resolvable peak(s), need 2")
    p1, p2 = sorted(peaks[np.argsort(smooth[peaks])[-2:]])
    split = p1 + int(np.argmin(smooth[p1:p2 + 1]))
    first = fit_emg_peak(x[:split], counts[:split], bin_width)
    second = fit_emg_peak(x[split:], counts[split:], bin_width)
    return unbalance_from_peaks(first, second)
