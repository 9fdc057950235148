"""Simulation and analysis of a delayed-choice time-bin experiment over a satellite link.

Submodules:
    orbit       pass geometry, round-trip times, kinematic phase, SLR Doppler
    photonics   interferometer state propagation and detection probabilities
    protocol    cycle schedules, delayed choices and causality checks
    events      Monte Carlo time-tag generation
    analysis    arrival residuals, phase binning, visibility and which-path fits
    pipeline    end-to-end simulate / analyze orchestration
    cli         command-line entry point
"""
from .analysis import fit_visibility, which_path_probability
from .config import RunConfig, load_config, load_scenario
from .events import SimulationConfig, simulate_pass
from .orbit import PassProfile, PhysicalConstants, generate_pass, kinematic_phase
from .photonics import ImperfectionModel, detection_probabilities, propagate
from .pipeline import analyze, run_closure, simulate
from .protocol import ProtocolParams, build_schedules, verify_delayed_choice

__version__ = "0.1.0"

__all__ = [
    "ImperfectionModel",
    "PassProfile",
    "PhysicalConstants",
    "ProtocolParams",
    "RunConfig",
    "SimulationConfig",
    "analyze",
    "build_schedules",
    "detection_probabilities",
    "fit_visibility",
    "generate_pass",
    "kinematic_phase",
    "load_config",
    "load_scenario",
    "propagate",
    "run_closure",
    "simulate",
    "simulate_pass",
    "verify_delayed_choice",
    "which_path_probability",
]
