"""Monte Carlo time tags for a full pass.

Photons are generated in aggregate per accepted segment: the total number of
photons reaching the receiver optics is Poisson(N_pulses * mu * eta_opt) and
each one is attached to a uniformly drawn pulse of the segment. That is the
same distribution as drawing Poisson(mu) per pulse and thinning each photon
with eta_opt, but costs O(detections) instead of O(pulses).
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .orbit import PassTrack, PhysicalConstants, transmit_epoch
from .photonics import IDEAL, ImperfectionModel, detection_probabilities
from .protocol import DISCARD, CycleSchedule, assign_bits

CHANNELS = ("+", "-")
SLOT_BACKGROUND = -2  # truth slot code for background records


@dataclass(frozen=True)
class SimulationConfig:
    pulse_rate: float = 1e8
    mu: float = 2.2e-3
    eta_opt: float = 0.13
    eta_det_plus: float = 0.10
    eta_det_minus: float = 0.10
    jitter_rms: float = 0.5e-9
    tagger_resolution: float = 81e-12
    background_rate: float = 0.0  # counts/s per detector
    seed: int = 0
    imperfections: ImperfectionModel = field(default_factory=ImperfectionModel)

    def __post_init__(self):
        if not (self.pulse_rate > 0 and self.tagger_resolution > 0):
            raise ValueError("pulse_rate and tagger_resolution must be positive")
        if self.mu < 0 or self.mu > 0.1:
            raise ValueError("mu must lie in [0, 0.1] (single-photon regime)")
        if self.jitter_rms < 0 or self.background_rate < 0:
            raise ValueError("jitter_rms and background_rate must be >= 0")
        for name in ("eta_opt", "eta_det_plus", "eta_det_minus"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")

    @property
    def eta_det(self) -> tuple[float, float]:
        """Effective detector efficiencies (+, -) including relative factors."""
        imp = self.imperfections
        return self.eta_det_plus * imp.eta_plus, self.eta_det_minus * imp.eta_minus


@dataclass(frozen=True)
class TimeTagRecord:
    tag: int
    channel: str
    cycle_index: int
    bit: int


@dataclass(eq=False)
class TimeTags:
    """Column store of records; channel 0 is '+', 1 is '-'."""

    tag: np.ndarray
    channel: np.ndarray
    cycle: np.ndarray
    bit: np.ndarray
    resolution: float = 81e-12

    @classmethod
    def empty(cls, resolution: float = 81e-12) -> "TimeTags":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int8), np.zeros(0, np.int64),
                   np.zeros(0, np.int8), resolution)

    def __len__(self) -> int:
        return len(self.tag)

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return TimeTagRecord(int(self.tag[i]), CHANNELS[self.channel[i]], int(self.cycle[i]), int(self.bit[i]))
        return TimeTags(self.tag[i], self.channel[i], self.cycle[i], self.bit[i], self.resolution)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def times(self) -> np.ndarray:
        return self.tag * self.resolution


@dataclass(eq=False)
class TruthSidecar:
    """Per-record simulation truth. Slot codes: -1 early, 0 central, +1 late, -2 background."""

    slot: np.ndarray
    phi: np.ndarray
    t_ref: np.ndarray
    is_background: np.ndarray

    def __len__(self) -> int:
        return len(self.slot)

    def __getitem__(self, i):
        return TruthSidecar(self.slot[i], self.phi[i], self.t_ref[i], self.is_background[i])


def multi_photon_fraction(mu: float) -> float:
    """P(n >= 2) for Poisson(mu) photon number; about mu**2/2 for small mu."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    return float(-math.expm1(-mu) - mu * math.exp(-mu))


def cycle_rng(seed: int, cycle_index: int) -> np.random.Generator:
    """Per-cycle generator: PCG64 seeded by SeedSequence([seed, cycle_index])."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(cycle_index)])))


def _simulate_cycle(schedule: CycleSchedule, track: PassTrack, config: SimulationConfig,
                    constants: PhysicalConstants):
    rng = cycle_rng(config.seed, schedule.cycle_index)
    eta = np.array(config.eta_det)
    mean_photons = config.mu * config.eta_opt
    chunks = []
    for seg in schedule.segments():
        if seg.length <= 0:
            continue
        tx_lo, tx_hi = transmit_epoch(np.array([seg.start, seg.end]), track)
        n_lo = math.ceil(tx_lo * config.pulse_rate)
        n_hi = math.floor(tx_hi * config.pulse_rate)
        n_pulses = max(n_hi - n_lo + 1, 0)
        k = rng.poisson(n_pulses * mean_photons) if n_pulses else 0
        pulse = rng.integers(n_lo, n_hi + 1, size=k) if k else np.zeros(0, np.int64)
        t_tx = pulse / config.pulse_rate
        rtt = track.rtt_at(t_tx)
        t_ref = t_tx + rtt
        phi = track.phi_at(t_tx + rtt / 2)
        probs = detection_probabilities(phi, seg.bit, config.imperfections).reshape(k, 6)
        cell = (rng.random(k)[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)
        cell = np.minimum(cell, 5)
        channel, slot_idx = np.divmod(cell, 3)
        survived = rng.random(k) < eta[channel]
        slot = slot_idx - 1
        jitter = rng.normal(0.0, config.jitter_rms, k) if config.jitter_rms > 0 else np.zeros(k)
        t_det = t_ref + slot * constants.delta_t + jitter
        chunks.append((t_det[survived], channel[survived], slot[survived],
                       phi[survived], t_ref[survived]))
        if config.background_rate > 0:
            for ch in (0, 1):
                nb = rng.poisson(config.background_rate * seg.length)
                tb = rng.uniform(seg.start, seg.end, nb)
                chunks.append((tb, np.full(nb, ch), np.full(nb, SLOT_BACKGROUND),
                               np.full(nb, np.nan), np.full(nb, np.nan)))
    if not chunks:
        return None
    t_det, channel, slot, phi, t_ref = (np.concatenate(c) for c in zip(*chunks))
    bit = assign_bits(t_det, schedule)
    keep = bit != DISCARD
    return t_det[keep], channel[keep], slot[keep], phi[keep], t_ref[keep], bit[keep]


def simulate_pass(track: PassTrack, schedules, config: SimulationConfig,
                  constants: PhysicalConstants | None = None) -> tuple[TimeTags, TruthSidecar]:
    """Time tags and truth for every scheduled cycle, sorted by (tag, cycle, channel).

    Each cycle draws from its own generator (see `cycle_rng`), so cycles can be
    generated in any order or in parallel with identical output.
    """
    constants = constants or track.constants
    lo, hi = track.span
    for s in schedules:
        if s.tx_window[0] < lo or s.rx_window[1] > hi:
            raise ValueError(f"schedule for cycle {s.cycle_index} is not covered by the pass")
    parts, cycles = [], []
    for s in schedules:
        out = _simulate_cycle(s, track, config, constants)
        if out is not None and len(out[0]):
            parts.append(out)
            cycles.append(np.full(len(out[0]), s.cycle_index, dtype=np.int64))
    if not parts:
        empty = np.zeros(0)
        return TimeTags.empty(config.tagger_resolution), TruthSidecar(
            np.zeros(0, np.int8), empty, empty, np.zeros(0, bool))
    t_det, channel, slot, phi, t_ref, bit = (np.concatenate(c) for c in zip(*parts))
    cycle = np.concatenate(cycles)
    tag = np.rint(t_det / config.tagger_resolution).astype(np.int64)
    order = np.lexsort((channel, cycle, tag))
    tags = TimeTags(tag[order], channel[order].astype(np.int8), cycle[order],
                    bit[order].astype(np.int8), config.tagger_resolution)
    truth = TruthSidecar(slot[order].astype(np.int8), phi[order], t_ref[order],
                         slot[order] == SLOT_BACKGROUND)
    return tags, truth


def accepted_exposure(schedules, pulse_rate: float = 1e8) -> dict[int, float]:
    """Accepted pulse count per governing bit value."""
    out = {0: 0.0, 1: 0.0}
    for s in schedules:
        for seg in s.segments():
            out[seg.bit] += seg.length * pulse_rate
    return out
