"""Run configuration: JSON files with units in the key names.

Schema (all sections optional except ``pass``)::

    {
      "scenario": "starlette",
      "seed": 20161101,
      "pass": {"altitude_m", "min_slant_m", "duration_s", "sample_step_s"},
      "constants": {"wavelength_m", "mzi_unbalance_s"},
      "simulation": {"pulse_rate_hz", "mu", "eta_opt", "eta_det_plus", "eta_det_minus",
                     "jitter_rms_s", "tagger_resolution_s", "background_rate_hz",
                     "slr_timing_noise_s",
                     "imperfections": {"visibility_factor", "whichpath_purity",
                                       "eta_plus", "eta_minus"}},
      "protocol": {"t_trans_s", "t_shwp_s", "cycle_period_s", "cycle_stride",
                   "rtt_scale", "force_bit"},
      "analysis": {"bin_width_s", "phase_bins"},
      "output": {"dir", "track_export_step_s"}
    }
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
import json
from pathlib import Path

from .events import SimulationConfig
from .orbit import PassProfile, PhysicalConstants
from .photonics import ImperfectionModel
from .protocol import ProtocolParams

SCENARIOS = ("starlette", "beacon-c", "adversarial")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisParams:
    bin_width: float = 162e-12
    phase_bins: int = 10


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    profile: PassProfile
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    analysis: AnalysisParams = field(default_factory=AnalysisParams)
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    slr_timing_noise: float = 20e-12
    seed: int | None = None
    output_dir: str | None = None
    track_export_step: float = 0.01

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, simulation=replace(self.simulation, seed=seed))

    def validate(self) -> None:
        res = self.simulation.tagger_resolution
        ratio = self.analysis.bin_width / res
        if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-6:
            raise ConfigError("analysis.bin_width_s must be a positive multiple of tagger_resolution_s")
        if self.analysis.phase_bins != 10:
            raise ConfigError("analysis.phase_bins is fixed at 10")


_KNOWN = {
    "top": {"scenario", "seed", "pass", "constants", "simulation", "protocol", "analysis", "output"},
    "pass": {"altitude_m", "min_slant_m", "duration_s", "sample_step_s"},
    "constants": {"wavelength_m", "mzi_unbalance_s"},
    "simulation": {"pulse_rate_hz", "mu", "eta_opt", "eta_det_plus", "eta_det_minus", "jitter_rms_s",
                   "tagger_resolution_s", "background_rate_hz", "slr_timing_noise_s", "imperfections"},
    "imperfections": {"visibility_factor", "whichpath_purity", "eta_plus", "eta_minus"},
    "protocol": {"t_trans_s", "t_shwp_s", "cycle_period_s", "cycle_stride", "rtt_scale", "force_bit"},
    "analysis": {"bin_width_s", "phase_bins"},
    "output": {"dir", "track_export_step_s"},
}


def _check_keys(section: str, data: dict) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = set(data) - _KNOWN[section]
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(sorted(unknown))}")


def _pick(data: dict, mapping: dict) -> dict:
    return {attr: data[key] for key, attr in mapping.items() if key in data}


def from_dict(data: dict) -> RunConfig:
    try:
        return _from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _from_dict(data: dict) -> RunConfig:
    _check_keys("top", data)
    if "pass" not in data:
        raise ConfigError("missing 'pass' section")
    for section in ("pass", "constants", "simulation", "protocol", "analysis", "output"):
        _check_keys(section, data.get(section, {}))
    p = data["pass"]
    profile = PassProfile(
        altitude=float(p["altitude_m"]), min_slant=float(p["min_slant_m"]),
        duration=float(p["duration_s"]), sample_step=float(p.get("sample_step_s", 1e-3)),
    )
    constants = PhysicalConstants(**_pick(data.get("constants", {}),
                                          {"wavelength_m": "wavelength", "mzi_unbalance_s": "delta_t"}))
    sim = dict(data.get("simulation", {}))
    imp_data = sim.pop("imperfections", {})
    _check_keys("imperfections", imp_data)
    imperfections = ImperfectionModel(**imp_data)
    seed = data.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    simulation = SimulationConfig(
        seed=seed if seed is not None else 0,
        imperfections=imperfections,
        **_pick(sim, {"pulse_rate_hz": "pulse_rate", "mu": "mu", "eta_opt": "eta_opt",
                      "eta_det_plus": "eta_det_plus", "eta_det_minus": "eta_det_minus",
                      "jitter_rms_s": "jitter_rms", "tagger_resolution_s": "tagger_resolution",
                      "background_rate_hz": "background_rate"}),
    )
    protocol = ProtocolParams(**_pick(data.get("protocol", {}), {
        "t_trans_s": "t_trans", "t_shwp_s": "t_shwp", "cycle_period_s": "cycle_period",
        "cycle_stride": "cycle_stride", "rtt_scale": "rtt_scale", "force_bit": "force_bit"}))
    analysis = AnalysisParams(**_pick(data.get("analysis", {}),
                                      {"bin_width_s": "bin_width", "phase_bins": "phase_bins"}))
    out = data.get("output", {})
    cfg = RunConfig(
        scenario=str(data.get("scenario", "custom")),
        profile=profile,
        simulation=simulation,
        protocol=protocol,
        analysis=analysis,
        constants=constants,
        slr_timing_noise=float(sim.get("slr_timing_noise_s", 20e-12)),
        seed=seed,
        output_dir=out.get("dir"),
        track_export_step=float(out.get("track_export_step_s", 0.01)),
    )
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return from_dict(data)


def scenario_dict(name: str) -> dict:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; bundled: {', '.join(SCENARIOS)}")
    text = resources.files("delayed_choice.scenarios").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def load_scenario(name: str) -> RunConfig:
    return from_dict(scenario_dict(name))


def resolve_config(name_or_path: str) -> RunConfig:
    """A bundled scenario name or a path to a JSON config."""
    if name_or_path in SCENARIOS:
        return load_scenario(name_or_path)
    return load_config(name_or_path)
