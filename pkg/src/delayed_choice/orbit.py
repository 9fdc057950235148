"""Satellite pass kinematics, round-trip times, kinematic phase and SLR Doppler.

All epochs are seconds on the ground-station clock, all distances meters.
Positive radial velocity means the satellite is receding.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy.interpolate import CubicSpline

SPEED_OF_LIGHT = 299_792_458.0
EARTH_RADIUS = 6_371_000.0
EARTH_GM = 3.986004418e14


class OutOfSpanError(ValueError):
    """Raised when an epoch falls outside the time span covered by a track."""


@dataclass(frozen=True)
class PhysicalConstants:
    c: float = SPEED_OF_LIGHT
    wavelength: float = 532e-9
    delta_t: float = 3.498e-9  # MZI unbalance

    def __post_init__(self):
        for name in ("c", "wavelength", "delta_t"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def phase_scale(self) -> float:
        """2*pi*c*delta_t/lambda, the phase per unit of 2*beta/(1+beta)."""
        return 2.0 * math.pi * self.c * self.delta_t / self.wavelength


@dataclass(frozen=True)
class PassProfile:
    altitude: float
    min_slant: float
    duration: float
    sample_step: float = 1e-3

    def __post_init__(self):
        if not (self.altitude > 0 and self.duration > 0 and self.sample_step > 0):
            raise ValueError("altitude, duration and sample_step must be positive")
        if self.min_slant < self.altitude:
            raise ValueError(
                f"min_slant {self.min_slant:.0f} m is below the altitude "
                f"{self.altitude:.0f} m: no such closest approach exists"
            )


@dataclass(frozen=True)
class PassSample:
    t: float
    slant: float
    v_r: float
    beta: float
    rtt: float
    phi: float


@dataclass(frozen=True)
class SlrObservation:
    delta_t_tx: float
    delta_t_rx: float

    def __post_init__(self):
        if not (self.delta_t_tx > 0 and self.delta_t_rx > 0):
            raise ValueError("pulse spacings must be positive")


def kinematic_phase(beta, constants: PhysicalConstants = PhysicalConstants()):
    """Relative phase imprinted between the two time-bins by a moving reflector.

    Accepts scalars or arrays. ``sign(phi) == sign(beta)``.
    """
    beta = np.asarray(beta, dtype=float)
    if np.any(np.abs(beta) >= 1):
        raise ValueError("|beta| must be < 1")
    phi = 2.0 * beta / (1.0 + beta) * constants.phase_scale
    return float(phi) if phi.ndim == 0 else phi


def round_trip_time(slant, constants: PhysicalConstants = PhysicalConstants()):
    """Static-range round trip 2*d/c."""
    rtt = 2.0 * np.asarray(slant, dtype=float) / constants.c
    return float(rtt) if rtt.ndim == 0 else rtt


def doppler_velocity(obs: SlrObservation, constants: PhysicalConstants = PhysicalConstants()) -> float:
    """Radial velocity from the received spacing of two consecutive SLR pulses."""
    total = obs.delta_t_rx + obs.delta_t_tx
    return constants.c * (obs.delta_t_rx - obs.delta_t_tx) / total


def slr_spacing(v_r, delta_t_tx: float = 0.1, constants: PhysicalConstants = PhysicalConstants()):
    """Received spacing of pulses sent ``delta_t_tx`` apart; inverse of `doppler_velocity`."""
    beta = np.asarray(v_r, dtype=float) / constants.c
    out = delta_t_tx * (1.0 + beta) / (1.0 - beta)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FlybyGeometry:
    """Circular orbit over a non-rotating spherical Earth seen from one station.

    The central angle gamma between station and sub-satellite point follows
    cos(gamma) = cos(gamma0) * cos(omega * (t - t_mid)), a right spherical
    triangle whose short leg gamma0 is chosen so the closest slant equals
    ``min_slant``.
    """

    radius: float
    cos_gamma0: float
    omega: float
    t_mid: float

    @classmethod
    def from_profile(cls, profile: PassProfile, t_mid: float) -> "FlybyGeometry":
        r = EARTH_RADIUS + profile.altitude
        cos_gamma0 = (r * r + EARTH_RADIUS**2 - profile.min_slant**2) / (2 * r * EARTH_RADIUS)
        return cls(r, min(cos_gamma0, 1.0), math.sqrt(EARTH_GM / r**3), t_mid)

    def slant(self, t):
        wt = self.omega * (np.asarray(t, dtype=float) - self.t_mid)
        k = 2 * self.radius * EARTH_RADIUS * self.cos_gamma0
        return np.sqrt(self.radius**2 + EARTH_RADIUS**2 - k * np.cos(wt))

    def radial_velocity(self, t):
        wt = self.omega * (np.asarray(t, dtype=float) - self.t_mid)
        k = self.radius * EARTH_RADIUS * self.cos_gamma0 * self.omega
        return k * np.sin(wt) / self.slant(t)


@dataclass(frozen=True, eq=False)
class PassTrack(Sequence):
    """Uniformly sampled pass, stored column-wise; indexing yields `PassSample`."""

    t: np.ndarray
    slant: np.ndarray
    v_r: np.ndarray
    beta: np.ndarray
    rtt: np.ndarray
    phi: np.ndarray
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    COLUMNS = ("t", "slant", "v_r", "beta", "rtt", "phi")

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i):
        if isinstance(i, slice):
            cols = {name: getattr(self, name)[i] for name in self.COLUMNS}
            return PassTrack(**cols, constants=self.constants)
        return PassSample(*(float(getattr(self, name)[i]) for name in self.COLUMNS))

    @property
    def span(self) -> tuple[float, float]:
        if len(self.t) == 0:
            raise OutOfSpanError("empty track")
        return float(self.t[0]), float(self.t[-1])

    def _interp(self, t, column):
        t = np.asarray(t, dtype=float)
        lo, hi = self.span
        if np.any(t < lo) or np.any(t > hi):
            raise OutOfSpanError(f"epoch outside pass span [{lo}, {hi}]")
        out = np.interp(t, self.t, column)
        return float(out) if out.ndim == 0 else out

    def rtt_at(self, t):
        return self._interp(t, self.rtt)

    def slant_at(self, t):
        return self._interp(t, self.slant)

    def phi_at(self, t):
        return self._interp(t, self.phi)

    def beta_at(self, t):
        return self._interp(t, self.beta)


def generate_pass(profile: PassProfile, constants: PhysicalConstants = PhysicalConstants()) -> PassTrack:
    """Sample a symmetric flyby with closest approach at mid-pass."""
    half = int(round(profile.duration / (2 * profile.sample_step)))
    t = np.arange(2 * half + 1) * profile.sample_step
    geom = FlybyGeometry.from_profile(profile, t_mid=half * profile.sample_step)
    slant = geom.slant(t)
    v_r = geom.radial_velocity(t)
    v_r[half] = 0.0
    beta = v_r / constants.c
    return PassTrack(
        t=t,
        slant=slant,
        v_r=v_r,
        beta=beta,
        rtt=round_trip_time(slant, constants),
        phi=kinematic_phase(beta, constants),
        constants=constants,
    )


def predicted_arrival(t_tx, track):
    """Expected arrival t_tx + rtt(t_tx).

    ``track`` is a `PassTrack` (rtt linear between samples) or an `SlrTrack`
    (cubic spline through the 10 Hz ranges).
    """
    t_tx = np.asarray(t_tx, dtype=float)
    out = t_tx + track.rtt_at(t_tx)
    return float(out) if out.ndim == 0 else out


def transmit_epoch(t_arrival, track, iterations: int = 4):
    """Invert `predicted_arrival`; converges at rate |d rtt/dt| ~ 2|beta|.

    Epochs are clipped into the track span while iterating.
    """
    t_arrival = np.asarray(t_arrival, dtype=float)
    lo, hi = track.span
    t_tx = t_arrival
    for _ in range(iterations + 1):
        t_tx = t_arrival - track.rtt_at(np.clip(t_tx, lo, hi))
    return float(t_tx) if t_tx.ndim == 0 else t_tx


@dataclass(frozen=True, eq=False)
class SlrTrack:
    """10 Hz laser-ranging log: transmit epochs, measured rtt, received spacing.

    ``delta_t_rx[k]`` is the received spacing between pulses k and k+1 (NaN on
    the last pulse).
    """

    t: np.ndarray
    rtt: np.ndarray
    delta_t_rx: np.ndarray
    delta_t_tx: float = 0.1
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def span(self) -> tuple[float, float]:
        if len(self.t) == 0:
            raise OutOfSpanError("empty SLR track")
        return float(self.t[0]), float(self.t[-1])

    @cached_property
    def _rtt_spline(self):
        return CubicSpline(self.t, self.rtt)

    def rtt_at(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.span
        if np.any(t < lo) or np.any(t > hi):
            raise OutOfSpanError(f"epoch outside SLR span [{lo}, {hi}]")
        out = self._rtt_spline(t)
        return float(out) if out.ndim == 0 else out

    def velocity_estimates(self) -> tuple[np.ndarray, np.ndarray]:
        """(reflection epochs, Doppler radial velocities) for each pulse pair."""
        if len(self.t) < 2:
            raise OutOfSpanError("SLR track needs at least two pulses")
        dt_rx = self.delta_t_rx[:-1]
        v = self.constants.c * (dt_rx - self.delta_t_tx) / (dt_rx + self.delta_t_tx)
        t_mid = 0.5 * (self.t[:-1] + self.t[1:])
        rtt_mid = 0.5 * (self.rtt[:-1] + self.rtt[1:])
        return t_mid + 0.5 * rtt_mid, v

    def beta_at(self, t_reflect):
        epochs, v = self.velocity_estimates()
        t_reflect = np.asarray(t_reflect, dtype=float)
        if np.any(t_reflect < epochs[0]) or np.any(t_reflect > epochs[-1]):
            raise OutOfSpanError("reflection epoch not covered by SLR Doppler estimates")
        out = np.interp(t_reflect, epochs, v) / self.constants.c
        return float(out) if out.ndim == 0 else out


def simulate_slr_track(
    track: PassTrack,
    period: float = 0.1,
    timing_noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> SlrTrack:
    """Range the pass with a pulse every ``period`` seconds.

    Each measured rtt carries Gaussian noise of ``timing_noise`` seconds RMS;
    the received spacing is derived from consecutive measured arrivals.
    """
    lo, hi = track.span
    n = int(math.floor((hi - lo) / period + 1e-9)) + 1
    t = lo + np.arange(n) * period
    rtt = track.rtt_at(t)
    if timing_noise > 0:
        rng = rng if rng is not None else np.random.default_rng()
        rtt = rtt + rng.normal(0.0, timing_noise, n)
    dt_rx = np.full(n, np.nan)
    dt_rx[:-1] = period + np.diff(rtt)
    return SlrTrack(t=t, rtt=np.asarray(rtt, dtype=float), delta_t_rx=dt_rx,
                    delta_t_tx=period, constants=track.constants)
