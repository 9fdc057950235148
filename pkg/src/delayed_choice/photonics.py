"""Hybrid time-bin / polarization photon states through the MZI-sHWP-satellite chain.

Four-mode basis order (fixed): (early,H), (early,V), (late,H), (late,V).
After the return pass the monitored MZI port has three time slots
(early, central, late) each carrying H and V, stored as a (3, 2) array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np

EARLY_H, EARLY_V, LATE_H, LATE_V = range(4)
SLOTS = ("early", "central", "late")
DETECTORS = ("+", "-")
SLOT_OFFSETS = (-1, 0, 1)  # in units of the MZI unbalance

_NORM_TOL = 1e-12

H = np.array([1.0, 0.0], dtype=complex)
V = np.array([0.0, 1.0], dtype=complex)
DIAGONAL = (H + V) / np.sqrt(2)
ANTIDIAGONAL = (H - V) / np.sqrt(2)


def _check_norm(amplitudes: np.ndarray):
    norm2 = float(np.sum(np.abs(amplitudes) ** 2))
    if abs(norm2 - 1.0) > _NORM_TOL:
        raise ValueError(f"state is not normalized (|psi|^2 = {norm2!r})")


@dataclass(frozen=True, eq=False)
class PhotonState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(4)
        _check_norm(amps)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, index: int) -> "PhotonState":
        amps = np.zeros(4, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def allclose(self, other: "PhotonState", atol: float = 1e-12) -> bool:
        return np.allclose(self.amplitudes, other.amplitudes, rtol=0, atol=atol)


@dataclass(frozen=True, eq=False)
class SlotState:
    """Amplitudes at the monitored MZI exit, shape (3 slots, 2 polarizations)."""

    amplitudes: np.ndarray

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class ImperfectionModel:
    visibility_factor: float = 1.0
    whichpath_purity: float = 1.0
    eta_plus: float = 1.0
    eta_minus: float = 1.0

    def __post_init__(self):
        for name in ("visibility_factor", "whichpath_purity"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("eta_plus", "eta_minus"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")


IDEAL = ImperfectionModel()


@dataclass(frozen=True, eq=False)
class DetectionTable:
    """Click probabilities indexed by (detector, slot); rows '+', '-'."""

    probabilities: np.ndarray = field(repr=False)

    def __getitem__(self, key) -> float:
        det, slot = key
        i = DETECTORS.index(det) if isinstance(det, str) else det
        j = SLOTS.index(slot) if isinstance(slot, str) else slot
        return float(self.probabilities[i, j])

    def total(self) -> float:
        return float(self.probabilities.sum())

    def to_dict(self) -> dict:
        return {f"{d},{s}": self[d, s] for d in DETECTORS for s in SLOTS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def mzi_forward(polarization) -> PhotonState:
    """Outgoing MZI pass: H takes the short arm (early), V the long arm (late)."""
    pol = np.asarray(polarization, dtype=complex).reshape(2)
    _check_norm(pol)
    amps = np.zeros(4, dtype=complex)
    amps[EARLY_H] = pol[0]
    amps[LATE_V] = pol[1]
    return PhotonState(amps)


_SWAP = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def shwp_apply(state: PhotonState, b: int) -> PhotonState:
    """Switchable half-wave plate at 45 degrees: identity when off, H<->V when on."""
    if b not in (0, 1):
        raise ValueError("b must be 0 or 1")
    if b == 0:
        return state
    return PhotonState(_SWAP @ state.amplitudes)


def satellite_phase(state: PhotonState, phi: float) -> PhotonState:
    amps = state.amplitudes.copy()
    amps[[LATE_H, LATE_V]] *= np.exp(1j * phi)
    return PhotonState(amps)


def mzi_return(state: PhotonState) -> SlotState:
    """Return MZI pass: V takes the short arm, H the long arm (+1 slot)."""
    a = state.amplitudes
    out = np.zeros((3, 2), dtype=complex)
    out[0, 1] += a[EARLY_V]  # early + 0
    out[1, 0] += a[EARLY_H]  # early + dt
    out[1, 1] += a[LATE_V]   # late + 0
    out[2, 0] += a[LATE_H]   # late + dt
    return SlotState(out)


def project_pm(slots: SlotState) -> DetectionTable:
    """Measure each slot in the {|+>, |->} basis."""
    amp_plus = slots.amplitudes @ DIAGONAL.conj()
    amp_minus = slots.amplitudes @ ANTIDIAGONAL.conj()
    return DetectionTable(np.vstack([np.abs(amp_plus) ** 2, np.abs(amp_minus) ** 2]))


def propagate(phi: float, b: int, polarization=DIAGONAL) -> DetectionTable:
    """Full state propagation of one photon: source to detectors.

    The sHWP is off on the way out and set by ``b`` on the way back.
    """
    state = mzi_forward(polarization)
    state = shwp_apply(state, 0)
    state = satellite_phase(state, phi)
    state = shwp_apply(state, b)
    return project_pm(mzi_return(state))


def detection_probabilities(phi, b: int, imperfections: ImperfectionModel = IDEAL) -> np.ndarray:
    """Closed-form click probabilities, shape phi.shape + (2, 3).

    b=0: central slot, P(+/-) = (1 +/- V0 cos phi)/2.
    b=1: fraction p_wp split evenly over the lateral slots and detectors, the
    rest spread flat over the central slot.
    """
    phi = np.asarray(phi, dtype=float)
    out = np.zeros(phi.shape + (2, 3))
    if b == 0:
        c = imperfections.visibility_factor * np.cos(phi)
        out[..., 0, 1] = 0.5 * (1.0 + c)
        out[..., 1, 1] = 0.5 * (1.0 - c)
    elif b == 1:
        p = imperfections.whichpath_purity
        out[..., :, 0] = p / 4
        out[..., :, 2] = p / 4
        out[..., :, 1] = (1.0 - p) / 2
    else:
        raise ValueError("b must be 0 or 1")
    return out


def detection_table(phi: float, b: int, imperfections: ImperfectionModel = IDEAL) -> DetectionTable:
    """Click probabilities per (detector, slot). Efficiencies are not applied here."""
    return DetectionTable(detection_probabilities(float(phi), b, imperfections))
