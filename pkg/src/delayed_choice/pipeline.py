"""End-to-end orchestration: simulate a pass, analyze time tags, build reports."""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from pathlib import Path

import numpy as np

from . import io
from .analysis import (
    N_PHASE_BINS,
    PhaseBinStats,
    build_histogram,
    classical_bound_significance,
    compute_delta,
    count_balance,
    estimate_mu,
    extract_counts,
    fit_visibility,
    flatness,
    phase_bin,
    phase_of_record,
    residual_stats,
    which_path_probability,
)
from .config import RunConfig
from .events import TimeTags, TruthSidecar, accepted_exposure, simulate_pass
from .orbit import OutOfSpanError, PassTrack, SlrTrack, generate_pass, simulate_slr_track
from .peaks import FOUR_SIGMA_FRACTION, DegenerateHistogramError
from .protocol import CycleSchedule, build_schedules

TIMETAGS_FILE = "timetags.csv"
TRUTH_FILE = "truth.jsonl"
PASS_FILE = "pass.csv"
SLR_FILE = "slr.csv"
SCHEDULE_FILE = "schedule.csv"


@dataclass(eq=False)
class SimulationRun:
    config: RunConfig
    track: PassTrack
    slr: SlrTrack
    schedules: list[CycleSchedule]
    tags: TimeTags
    truth: TruthSidecar


def slr_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0x5C4])))


def simulate(config: RunConfig) -> SimulationRun:
    if config.seed is None:
        raise ValueError("a seed is required to simulate")
    track = generate_pass(config.profile, config.constants)
    schedules = build_schedules(track, config.protocol, seed=config.seed)
    tags, truth = simulate_pass(track, schedules, config.simulation, config.constants)
    slr = simulate_slr_track(track, config.protocol.cycle_period, config.slr_timing_noise,
                             slr_rng(config.seed))
    return SimulationRun(config, track, slr, schedules, tags, truth)


def write_simulation(run: SimulationRun, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f for name, f in [("timetags", TIMETAGS_FILE), ("truth", TRUTH_FILE),
                                            ("pass", PASS_FILE), ("slr", SLR_FILE),
                                            ("schedule", SCHEDULE_FILE)]}
    io.write_timetags(paths["timetags"], run.tags)
    io.write_truth(paths["truth"], run.truth)
    step = max(int(round(run.config.track_export_step / run.config.profile.sample_step)), 1)
    io.write_pass_csv(paths["pass"], run.track, step=step)
    io.write_slr_csv(paths["slr"], run.slr)
    io.write_schedules(paths["schedule"], run.schedules)
    return paths


@dataclass(eq=False)
class AnalysisResult:
    report: dict
    phase_bins: dict[int, list[PhaseBinStats]] = field(default_factory=dict)
    histograms: list = field(default_factory=list)

    def phase_rows(self) -> list[dict]:
        return [
            {"bit": bit, "j": b.j, "phi_center": b.phi_center, "n_plus": b.n_plus,
             "n_minus": b.n_minus, "f_plus": b.f_plus, "f_minus": b.f_minus, "sigma": b.sigma_f}
            for bit, bins in sorted(self.phase_bins.items()) for b in bins
        ]


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return None if not math.isfinite(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def analyze(tags: TimeTags, slr: SlrTrack, config: RunConfig,
            schedules: list[CycleSchedule] | None = None,
            truth: TruthSidecar | None = None) -> AnalysisResult:
    """Full reduction of a pass. Reads ``truth`` only to append comparison fields."""
    sim = config.simulation
    dt = config.constants.delta_t
    bw = config.analysis.bin_width
    eta = sim.eta_det
    gate = 0.5 / sim.pulse_rate
    period = config.protocol.cycle_period

    tx_windows = np.column_stack([slr.t, slr.t + period / 2]) if len(slr) else None
    delta = compute_delta(tags.times, slr, sim.pulse_rate, gate, tx_windows)
    ok = delta.matched.copy()
    phi = np.full(len(tags), np.nan)
    if ok.any():
        epochs, _ = slr.velocity_estimates()
        t_reflect = delta.t_tx + 0.5 * slr.rtt_at(np.clip(delta.t_tx, *slr.span))
        covered = ok & (t_reflect >= epochs[0]) & (t_reflect <= epochs[-1])
        phi[covered] = phase_of_record(delta.t_tx[covered], slr, config.constants)
        n_uncovered = int((ok & ~covered).sum())
        ok = covered
    else:
        n_uncovered = 0
    j = np.where(ok, phase_bin(np.nan_to_num(phi)), -1)

    def hist(mask, bit, channel):
        return build_histogram(delta.delta[mask], bw, dt, bit, channel)

    report: dict = {
        "scenario": config.scenario,
        "n_records": len(tags),
        "n_unmatched": delta.n_unmatched,
        "n_uncovered": n_uncovered,
    }
    result = AnalysisResult(report)
    integrated = {}
    for bit in (0, 1):
        sel = ok & (tags.bit == bit)
        hp, hm = hist(sel & (tags.channel == 0), bit, "+"), hist(sel & (tags.channel == 1), bit, "-")
        result.histograms += [hp, hm]
        counts = extract_counts(hp, hm, bit, eta, None, dt, sim.jitter_rms, gate)
        integrated[bit] = (counts, hp + hm)
        bins = []
        for jj in range(N_PHASE_BINS):
            in_bin = sel & (j == jj)
            try:
                c = extract_counts(hist(in_bin & (tags.channel == 0), bit, "+"),
                                   hist(in_bin & (tags.channel == 1), bit, "-"),
                                   bit, eta, counts.shape, dt, sim.jitter_rms, gate)
                bins.append(PhaseBinStats.from_counts(jj, c.n_plus, c.n_minus))
            except (DegenerateHistogramError, ValueError):
                continue
        result.phase_bins[bit] = bins

    c0, h0 = integrated[0]
    c1, h1 = integrated[1]
    vis = fit_visibility(result.phase_bins[0])
    sigma_r, coverage = residual_stats(vis)
    chi2, dof, max_z = flatness(result.phase_bins[1])
    wp = which_path_probability(h1, dt, sim.jitter_rms, gate)
    z = classical_bound_significance(vis.v_exp, vis.sigma_v, wp.p_wp)
    report.update({
        "v_exp": vis.v_exp,
        "sigma_v": vis.sigma_v,
        "sigma_v_scatter": vis.sigma_v_scatter,
        "visibility_chi2_dof": vis.chi2 / vis.dof if vis.dof else None,
        "sigma_R": sigma_r,
        "fraction_within_1p5_sigma": coverage,
        "p_wp": wp.p_wp,
        "sigma_p": wp.sigma_p,
        "z": z,
        "whichpath_flatness": {"chi2": chi2, "dof": dof, "chi2_dof": chi2 / dof, "max_abs_z": max_z},
        "peaks": {
            "b0_center_s": c0.shape.centers[0],
            "b0_sigma_s": c0.shape.sigma,
            "b1_centers_s": list(c1.shape.centers),
            "b1_separation_s": c1.shape.separation,
            "b1_separation_err_s": math.hypot(*c1.shape.center_errs),
            "b1_sigma_s": c1.shape.sigma,
        },
        "counts": {
            "b0_central_raw": c0.raw_plus + c0.raw_minus,
            "b1_lateral_raw": c1.raw_plus + c1.raw_minus,
            "b1_three_peak": [wp.n_early, wp.n_central, wp.n_late],
        },
        "mu_estimate": None,
    })
    if schedules:
        exposure = accepted_exposure(schedules, sim.pulse_rate)
        n0, n1 = c0.raw_plus + c0.raw_minus, c1.raw_plus + c1.raw_minus
        report["count_balance"] = {
            "exposure_b0": exposure[0], "exposure_b1": exposure[1],
            "z": count_balance(n0, n1, exposure[0], exposure[1]),
            "z_unnormalized": count_balance(n0, n1),
        }
        signal = n0 + (wp.n_early + wp.n_central + wp.n_late) / FOUR_SIGMA_FRACTION
        accepted_time = (exposure[0] + exposure[1]) / sim.pulse_rate
        report["mu_estimate"] = estimate_mu(signal / accepted_time, sim.pulse_rate,
                                            sim.eta_opt, float(np.mean(eta)))
    if truth is not None:
        report["truth"] = truth_comparison(tags, truth, delta.delta, phi, report)
    result.report = _clean(report)
    return result


def truth_comparison(tags: TimeTags, truth: TruthSidecar, delta, phi, report: dict) -> dict:
    if len(truth) != len(tags):
        raise ValueError("truth sidecar does not match the time-tag file")
    sig = ~truth.is_background
    ok = sig & np.isfinite(phi)
    dphi = np.angle(np.exp(1j * (phi[ok] - truth.phi[ok])))
    b1 = sig & (tags.bit == 1)
    p_true = float(np.mean(truth.slot[b1] != 0)) if b1.any() else float("nan")
    return {
        "phase_error_rms": float(np.sqrt(np.mean(dphi**2))) if dphi.size else None,
        "phase_error_max": float(np.max(np.abs(dphi))) if dphi.size else None,
        "n_signal": int(sig.sum()),
        "n_background": int((~sig).sum()),
        "p_wp_true_sample": p_true,
        "p_wp_delta": report["p_wp"] - p_true,
    }


def write_analysis(result: AnalysisResult, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.json", "phase_bins": out / "phase_bins.csv",
             "histograms": out / "histograms.csv"}
    io.write_json(paths["report"], result.report)
    io.write_phase_table(paths["phase_bins"], result.phase_rows())
    io.write_histograms(paths["histograms"], result.histograms)
    return paths


def run_closure(config: RunConfig) -> tuple[SimulationRun, AnalysisResult]:
    """Simulate then analyze in memory (blind: truth is not passed)."""
    run = simulate(config)
    return run, analyze(run.tags, run.slr, config, run.schedules)


def render_summary(report: dict) -> str:
    def pct(x):
        return "n/a" if x is None else f"{100 * x:.1f}%"

    lines = [f"Scenario: {report.get('scenario')}",
             f"Records: {report.get('n_records')} ({report.get('n_unmatched')} unmatched)"]
    if report.get("v_exp") is not None:
        lines += [
            f"Interference visibility V_exp = {pct(report['v_exp'])} +/- {pct(report['sigma_v'])}",
            f"Residual RMS sigma_R = {report['sigma_R']:.3f}, "
            f"{pct(report['fraction_within_1p5_sigma'])} of points within 1.5 sigma",
            f"Which-path probability p_wp = {pct(report['p_wp'])} +/- {pct(report['sigma_p'])}",
            f"Classical-particle bound excluded at z = {report['z']:.2f} sigma",
        ]
        flat = report.get("whichpath_flatness") or {}
        if flat:
            lines.append(f"Which-path f+ flatness chi2/dof = {flat['chi2_dof']:.2f}")
    if report.get("mu_estimate") is not None:
        lines.append(f"Estimated mu at the primary mirror = {report['mu_estimate']:.3e}")
    if "count_balance" in report:
        lines.append(f"Count balance (exposure-normalized) z = {report['count_balance']['z']:.2f}")
    if "truth" in report:
        t = report["truth"]
        lines.append(f"Truth: phase error RMS {t['phase_error_rms']:.4f} rad, "
                     f"p_wp delta {t['p_wp_delta']:+.4f}")
    return "\n".join(lines) + "\n"
