"""The 100 ms SLR cycle: shutters, acceptance window, delayed choices, causality.

Within a cycle starting at t_slr the TX shutter is open for the first half and
the RX shutter for the second. The first choice t_b1 sits in the middle of the
shutter transition, the second follows rtt/2 later. Detections are accepted in
the window of length rtt - t_trans starting t_trans/2 after t_b1, minus a
settling interval t_shwp after each choice.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import enum
import math

import numpy as np

from .orbit import OutOfSpanError, PassTrack, PhysicalConstants

DISCARD = -1


@dataclass(frozen=True)
class ProtocolParams:
    t_trans: float = 5e-3
    t_shwp: float = 500e-6
    cycle_period: float = 0.1
    # Experiment runs on every k-th SLR cycle.
    cycle_stride: int = 1
    # >1 builds schedules from an inflated rtt (deliberately broken timing).
    rtt_scale: float = 1.0
    force_bit: int | None = None

    def __post_init__(self):
        if not (self.t_trans > 0 and self.t_shwp >= 0 and self.cycle_period > 0):
            raise ValueError("protocol durations must be positive")
        if self.cycle_stride < 1:
            raise ValueError("cycle_stride must be >= 1")
        if self.force_bit not in (None, 0, 1):
            raise ValueError("force_bit must be null, 0 or 1")


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    bit: int
    which: str  # "first" or "second"
    choice_epoch: float

    @property
    def length(self) -> float:
        return max(self.end - self.start, 0.0)


@dataclass(frozen=True)
class CycleSchedule:
    cycle_index: int
    t_slr: float
    rtt: float
    t_trans: float
    t_shwp: float
    tx_window: tuple[float, float]
    rx_window: tuple[float, float]
    tau_window: tuple[float, float]
    t_b1: float
    t_b2: float
    b1: int
    b2: int

    @property
    def tau(self) -> float:
        return self.rtt - self.t_trans

    def segments(self) -> tuple[Segment, Segment]:
        """Accepted sub-intervals of the tau window with their governing bits.

        The first is half-open on the right, the second closed.
        """
        lo, hi = self.tau_window
        first = Segment(max(lo, self.t_b1 + self.t_shwp), min(self.t_b2, hi), self.b1, "first", self.t_b1)
        second = Segment(max(lo, self.t_b2 + self.t_shwp), hi, self.b2, "second", self.t_b2)
        return first, second

    def choices(self) -> tuple["ChoiceRecord", "ChoiceRecord"]:
        return (ChoiceRecord(self.cycle_index, "first", self.t_b1, self.b1),
                ChoiceRecord(self.cycle_index, "second", self.t_b2, self.b2))


@dataclass(frozen=True)
class ChoiceRecord:
    cycle_index: int
    which: str
    epoch: float
    bit: int


@dataclass(frozen=True)
class SpacetimeEvent:
    t: float
    x: float

    def __post_init__(self):
        if self.x < 0:
            raise ValueError("radial distance must be non-negative")


class Interval(enum.Enum):
    SPACELIKE = "spacelike"
    TIMELIKE = "timelike"
    LIGHTLIKE = "lightlike"


def build_cycle(rtt: float, t_slr: float, params: ProtocolParams = ProtocolParams(),
                b1: int = 0, b2: int = 0, cycle_index: int = 0) -> CycleSchedule:
    half = params.cycle_period / 2
    # Both accepted segments must be non-empty and the window must end before
    # the next cycle.
    if not (params.t_trans + 2 * params.t_shwp < rtt < half):
        raise ValueError(
            f"rtt {rtt * 1e3:.3f} ms outside the workable range "
            f"({(params.t_trans + 2 * params.t_shwp) * 1e3:.3f}, {half * 1e3:.3f}) ms"
        )
    t_b1 = t_slr + half
    t_b2 = t_b1 + rtt / 2
    tau_start = t_b1 + params.t_trans / 2
    return CycleSchedule(
        cycle_index=cycle_index,
        t_slr=t_slr,
        rtt=rtt,
        t_trans=params.t_trans,
        t_shwp=params.t_shwp,
        tx_window=(t_slr, t_slr + half),
        rx_window=(t_slr + half, t_slr + params.cycle_period),
        tau_window=(tau_start, tau_start + rtt - params.t_trans),
        t_b1=t_b1,
        t_b2=t_b2,
        b1=int(b1),
        b2=int(b2),
    )


def qrng_bits(seed, n: int) -> np.ndarray:
    """Simulated 50:50 random bit source, deterministic in ``seed``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0x51B17])))
    return rng.integers(0, 2, size=n, dtype=np.int8)


def build_schedules(track: PassTrack, params: ProtocolParams = ProtocolParams(), seed: int = 0) -> list[CycleSchedule]:
    """Schedules for every used SLR cycle fully inside the track.

    The first and last cycle periods are left out so that the 10 Hz Doppler
    estimates (one per pulse pair) bracket every reflection epoch.
    """
    if len(track) == 0:
        return []
    lo, hi = track.span
    period = params.cycle_period
    n_slots = int(math.floor((hi - lo) / period + 1e-9))
    indices = [k for k in range(1, n_slots - 1) if k % params.cycle_stride == 0]
    bits = qrng_bits(seed, 2 * n_slots)
    schedules = []
    for k in indices:
        t_slr = lo + k * period
        rtt = track.rtt_at(t_slr) * params.rtt_scale
        b1, b2 = (params.force_bit,) * 2 if params.force_bit is not None else bits[2 * k: 2 * k + 2]
        schedules.append(build_cycle(rtt, t_slr, params, b1, b2, cycle_index=k))
    return schedules


def interval_classify(e1: SpacetimeEvent, e2: SpacetimeEvent, c: float = PhysicalConstants().c,
                      rel_tol: float = 1e-12) -> Interval:
    """Sign of c^2 dt^2 - dx^2 (negative: spacelike)."""
    ct = c * abs(e2.t - e1.t)
    dx = abs(e2.x - e1.x)
    scale = max(ct, dx)
    if scale == 0 or abs(ct - dx) <= rel_tol * scale:
        return Interval.LIGHTLIKE
    return Interval.TIMELIKE if ct > dx else Interval.SPACELIKE


def governing_bit(t_det: float, schedule: CycleSchedule) -> int | None:
    """Bit in force at detection time, or None inside a settling window or outside tau."""
    lo, hi = schedule.rx_window
    if not lo <= t_det <= hi:
        raise ValueError(f"detection at {t_det} s outside RX window [{lo}, {hi}]")
    bits = assign_bits(np.array([t_det]), schedule)
    return None if bits[0] == DISCARD else int(bits[0])


def assign_bits(t_det: np.ndarray, schedule: CycleSchedule) -> np.ndarray:
    """Vectorized `governing_bit`; DISCARD (-1) marks rejected detections."""
    s = schedule
    tau_end = s.tau_window[1]
    out = np.full(np.shape(t_det), DISCARD, dtype=np.int8)
    out[(t_det >= s.t_b1 + s.t_shwp) & (t_det < s.t_b2)] = s.b1
    out[(t_det >= s.t_b2 + s.t_shwp) & (t_det <= tau_end)] = s.b2
    return out


@dataclass
class CycleCausality:
    cycle_index: int
    min_margin: float  # m of spacelike slack; negative = causal contact
    group_reflected_before_choice: bool
    n_violations: int


@dataclass
class CausalityReport:
    cycles: list[CycleCausality] = field(default_factory=list)
    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return bool(self.cycles) and not self.violations

    @property
    def min_margin(self) -> float:
        return min((c.min_margin for c in self.cycles), default=float("nan"))

    def to_dict(self) -> dict:
        groups_ok = all(c.group_reflected_before_choice for c in self.cycles)
        return {
            "n_cycles": len(self.cycles),
            "n_violations": len(self.violations),
            "min_margin_km": self.min_margin / 1e3 if self.cycles else None,
            "groups": {
                "n_groups": 2 * len(self.cycles),
                "all_reflected_before_choice": groups_ok if self.cycles else None,
            },
            "cycles": [
                {"cycle": c.cycle_index, "margin_km": c.min_margin / 1e3,
                 "group_reflected_before_choice": c.group_reflected_before_choice}
                for c in self.cycles
            ],
            "violations": self.violations,
        }


def verify_delayed_choice(schedules, track: PassTrack, constants: PhysicalConstants | None = None,
                          points_per_segment: int = 65, x0: float = 0.0) -> CausalityReport:
    """Check every accepted detection window against its governing choice.

    A detection at t_det was reflected at t_det - rtt/2 at the slant range of
    that epoch; the choice happened at x0 (the ground) at t_b. The slack
    ``slant - x0 - c|t_reflect - t_b|`` must be positive for every epoch of
    the segment. Segments are sampled on a uniform grid including both ends.
    """
    constants = constants or track.constants
    c = constants.c
    report = CausalityReport()
    for s in schedules:
        worst = math.inf
        group_ok = True
        n_bad = 0
        for seg in s.segments():
            if seg.length <= 0:
                continue
            t_det = np.linspace(seg.start, seg.end, points_per_segment)
            t_refl = t_det - s.rtt / 2
            try:
                x = track.slant_at(t_refl)
            except OutOfSpanError:
                report.violations.append({"cycle": s.cycle_index, "choice": seg.which,
                                          "reason": "reflection epoch outside pass"})
                n_bad += 1
                continue
            margin = (x - x0) - c * np.abs(t_refl - seg.choice_epoch)
            i = int(np.argmin(margin))
            worst = min(worst, float(margin[i]))
            kind = interval_classify(SpacetimeEvent(seg.choice_epoch, x0),
                                     SpacetimeEvent(float(t_refl[i]), float(x[i])), c)
            if kind is not Interval.SPACELIKE:
                n_bad += 1
                report.violations.append({
                    "cycle": s.cycle_index, "choice": seg.which, "interval": kind.value,
                    "t_reflect": float(t_refl[i]), "t_choice": seg.choice_epoch,
                    "margin_km": float(margin[i]) / 1e3,
                })
            # The upper end of the first segment is open: t_reflect -> t_b1 from below.
            if float(t_refl[-1]) > seg.choice_epoch + 1e-12:
                group_ok = False
        report.cycles.append(CycleCausality(s.cycle_index, worst, group_ok, n_bad))
    return report


def schedule_to_row(s: CycleSchedule) -> dict:
    row = asdict(s)
    row["tau_start"], row["tau_end"] = row.pop("tau_window")
    row.pop("tx_window")
    row.pop("rx_window")
    return row
