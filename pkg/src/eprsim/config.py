"""Run configuration: a flat YAML key/value document.

Units are fixed by the key names and never written into values. Keys left out
take the defaults below (the experiment's published parameters).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import yaml

from . import model as mdl
from .apparatus import MOMENTUM, POSITION, ScanConfig
from .errors import ConfigError

PHASEMATCH_CHOICES = ("gaussian", "sinc")


@dataclass(frozen=True)
class RunConfig:
    # source
    pump_wavelength_nm: float = 390.0
    pump_width_mm: float = 0.17
    crystal_length_mm: float = 2.0
    phasematch: str = "gaussian"
    delta_phi_rad: float = 0.012
    walkoff_rad: float = 0.0
    # numerics
    oversample: float = 4.0
    min_n: int = 4096
    # apparatus
    slit_width_mm: float = 0.040
    focal_length_mm: float = 100.0
    background_fraction: float = 0.01
    wing_width_factor: float = 10.0
    peak_counts: int = 10_000
    position_scan_start_mm: float = -0.15
    position_scan_step_mm: float = 0.005
    position_scan_points: int = 61
    momentum_scan_start_mm: float = -0.24
    momentum_scan_step_mm: float = 0.008
    momentum_scan_points: int = 61
    fixed_slit_position_mm: Optional[float] = None
    fixed_slit_momentum_mm: Optional[float] = None
    # analysis
    background_subtract: bool = False
    slit_correction: bool = True
    condition_x2_mm: Optional[float] = None
    condition_p2_invmm: Optional[float] = None
    output_dir: str = "eprsim_out"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                if "Optional" not in str(f.type):
                    raise ConfigError(f"{f.name} may not be null")
                continue
            if f.type in ("float", "Optional[float]"):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigError(f"{f.name} must be a number, got {v!r}")
            elif f.type == "int":
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ConfigError(f"{f.name} must be an integer, got {v!r}")
            elif f.type == "bool" and not isinstance(v, bool):
                raise ConfigError(f"{f.name} must be true or false, got {v!r}")
            elif f.type == "str" and not isinstance(v, str):
                raise ConfigError(f"{f.name} must be a string, got {v!r}")
        for name in ("pump_wavelength_nm", "pump_width_mm", "crystal_length_mm", "delta_phi_rad",
                     "slit_width_mm", "focal_length_mm", "position_scan_step_mm",
                     "momentum_scan_step_mm", "peak_counts"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if self.phasematch not in PHASEMATCH_CHOICES:
            raise ConfigError(f"phasematch must be one of {PHASEMATCH_CHOICES}")
        if self.oversample < 4:
            raise ConfigError("oversample must be at least 4")
        if self.min_n < 64:
            raise ConfigError("min_n must be at least 64")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        # scan-level checks (points, background fraction, wing factor)
        self.scan_config(POSITION)
        self.scan_config(MOMENTUM)

    def model(self) -> mdl.BiphotonModel:
        pump = mdl.PumpBeam(self.pump_wavelength_nm, self.pump_width_mm)
        pm = (mdl.GaussianAngular(self.delta_phi_rad) if self.phasematch == "gaussian"
              else mdl.ParaxialSinc())
        return mdl.BiphotonModel(pump, mdl.Crystal.degenerate(pump, self.crystal_length_mm,
                                                              pm, self.walkoff_rad))

    def scan_config(self, mode: str) -> ScanConfig:
        pre = "position" if mode == POSITION else "momentum"
        return ScanConfig(
            mode=mode,
            slit_width_mm=self.slit_width_mm,
            focal_length_mm=self.focal_length_mm,
            scan_start_mm=getattr(self, f"{pre}_scan_start_mm"),
            scan_step_mm=getattr(self, f"{pre}_scan_step_mm"),
            scan_points=getattr(self, f"{pre}_scan_points"),
            fixed_slit_mm=getattr(self, f"fixed_slit_{pre}_mm"),
            background_fraction=self.background_fraction,
            wing_width_factor=self.wing_width_factor,
            peak_counts=self.peak_counts,
            seed=self.seed,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        # YAML reads 1 as int; accept it for float fields
        clean = {}
        for f in fields(cls):
            if f.name in data:
                v = data[f.name]
                if f.type in ("float", "Optional[float]") and isinstance(v, int) \
                        and not isinstance(v, bool):
                    v = float(v)
                clean[f.name] = v
        return cls(**clean)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
            raise ConfigError(f"config {path} must be a flat key: value document")
        return cls.from_mapping(data)
