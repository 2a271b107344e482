"""Two-photon source model for collinear degenerate downconversion.

All transverse momenta are wavenumbers in rad/mm (p = hbar * q with hbar = 1),
all lengths are in mm and wavelengths are given in nm.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigError, GridTooNarrowError

NM_PER_MM = 1e6

# Position-width coefficient of the sinc^2 emission pattern: the std of
# (x1 - x2) times k * (singles angular std). The paraxial sinc model reproduces
# it numerically (see tests/test_model.py::test_sinc_position_coefficient).
SINC_POSITION_COEFFICIENT = 1.88


@dataclass(frozen=True)
class PumpBeam:
    """Gaussian pump. ``width_w_mm`` is the std of the transverse intensity."""

    wavelength_nm: float = 390.0
    width_w_mm: float = 0.17

    def __post_init__(self):
        if not self.wavelength_nm > 0:
            raise ConfigError(f"pump wavelength must be positive, got {self.wavelength_nm}")
        if not self.width_w_mm > 0:
            raise ConfigError(f"pump width must be positive, got {self.width_w_mm}")

    @property
    def momentum_std(self) -> float:
        """Std of the pump momentum-space intensity, 1/(2w)."""
        return 1.0 / (2.0 * self.width_w_mm)


@dataclass(frozen=True)
class ParaxialSinc:
    """Phase matching from the paraxial mismatch (q1-q2)^2/(4 k_d) + rho (q1-q2)."""


@dataclass(frozen=True)
class GaussianAngular:
    """Gaussian stand-in for the sinc^2 emission with a given angular width.

    ``delta_phi_rad`` is the singles angular std of the sinc emission being
    replaced; the Gaussian reproduces that emission's position correlation
    width ``SINC_POSITION_COEFFICIENT / (k_d * delta_phi_rad)``.
    """

    delta_phi_rad: float = 0.012

    def __post_init__(self):
        if not self.delta_phi_rad > 0:
            raise ConfigError(f"delta_phi_rad must be positive, got {self.delta_phi_rad}")


PhaseMatchModel = Union[ParaxialSinc, GaussianAngular]


@dataclass(frozen=True)
class Crystal:
    length_L_mm: float = 2.0
    degenerate_wavelength_nm: float = 780.0
    phasematch: PhaseMatchModel = field(default_factory=ParaxialSinc)
    walkoff_rho: float = 0.0

    def __post_init__(self):
        if not self.length_L_mm > 0:
            raise ConfigError(f"crystal length must be positive, got {self.length_L_mm}")
        if not self.degenerate_wavelength_nm > 0:
            raise ConfigError("degenerate wavelength must be positive")
        if not np.isfinite(self.walkoff_rho):
            raise ConfigError("walk-off must be finite")

    @classmethod
    def degenerate(cls, pump: PumpBeam, length_L_mm: float = 2.0,
                   phasematch: PhaseMatchModel | None = None,
                   walkoff_rho: float = 0.0) -> "Crystal":
        """Crystal operated at exact degeneracy, signal and idler at 2 x pump wavelength."""
        return cls(length_L_mm, 2.0 * pump.wavelength_nm,
                   phasematch if phasematch is not None else ParaxialSinc(), walkoff_rho)


@dataclass(frozen=True)
class BiphotonModel:
    pump: PumpBeam = field(default_factory=PumpBeam)
    crystal: Crystal = field(default_factory=Crystal)
    chi: float = 1.0

    def __post_init__(self):
        if not self.chi > 0:
            raise ConfigError("chi must be positive")

    @classmethod
    def reference_defaults(cls, phasematch: PhaseMatchModel | None = None) -> "BiphotonModel":
        pump = PumpBeam(390.0, 0.17)
        pm = phasematch if phasematch is not None else GaussianAngular(0.012)
        return cls(pump, Crystal.degenerate(pump, 2.0, pm))

    @property
    def k_d(self) -> float:
        """Wavenumber of the degenerate signal/idler photons, rad/mm."""
        return 2.0 * np.pi * NM_PER_MM / self.crystal.degenerate_wavelength_nm


def pump_spectrum(model: BiphotonModel, q_sum):
    """Pump plane-wave amplitude at transverse wavenumber ``q_sum``; unit peak, zero phase."""
    w = model.pump.width_w_mm
    q = np.asarray(q_sum, dtype=float)
    return np.exp(-(q * w) ** 2).astype(complex)


def delta_kz(model: BiphotonModel, q1, q2):
    """Longitudinal wavevector mismatch in the paraxial degenerate model, rad/mm."""
    if not isinstance(model.crystal.phasematch, ParaxialSinc):
        raise ConfigError("delta_kz is only defined for the ParaxialSinc phase-matching model")
    qm = np.asarray(q1, dtype=float) - np.asarray(q2, dtype=float)
    return _paraxial_mismatch(model, qm)


def _paraxial_mismatch(model, q_minus):
    return q_minus ** 2 / (4.0 * model.k_d) + model.crystal.walkoff_rho * q_minus


def phase_matching_factor(dkz, L: float):
    """(exp(i dkz L) - 1) / (i dkz), equal to L at dkz = 0."""
    if not L > 0:
        raise ConfigError("crystal length must be positive")
    half = 0.5 * np.asarray(dkz, dtype=float) * L
    # np.sinc(x) = sin(pi x)/(pi x) is exact at 0
    return L * np.exp(1j * half) * np.sinc(half / np.pi)


def sum_factor(model: BiphotonModel, q_plus):
    """Factor of the amplitude that depends on q1 + q2."""
    return model.chi * pump_spectrum(model, q_plus)


def difference_factor(model: BiphotonModel, q_minus):
    """Factor of the amplitude that depends on q1 - q2."""
    pm = model.crystal.phasematch
    qm = np.asarray(q_minus, dtype=float)
    if isinstance(pm, GaussianAngular):
        s = model.k_d * pm.delta_phi_rad / SINC_POSITION_COEFFICIENT
        return np.exp(-qm ** 2 / (4.0 * s ** 2)).astype(complex)
    return phase_matching_factor(_paraxial_mismatch(model, qm), model.crystal.length_L_mm)


def biphoton_amplitude(model: BiphotonModel, q1, q2):
    """Two-photon momentum amplitude A(q1, q2)."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    return sum_factor(model, q1 + q2) * difference_factor(model, q1 - q2)


def minus_center(model: BiphotonModel) -> float:
    """Centre of the q1 - q2 emission profile (shifted by walk-off)."""
    if isinstance(model.crystal.phasematch, GaussianAngular):
        return 0.0
    return -2.0 * model.k_d * model.crystal.walkoff_rho


def sinc_null_scale(model: BiphotonModel) -> float:
    """|q1 - q2| at the first zero of the ideal sinc^2 emission, rad/mm."""
    return float(np.sqrt(8.0 * np.pi * model.k_d / model.crystal.length_L_mm))


def minus_intensity_std(model: BiphotonModel, points_per_null: int = 256,
                        nulls: float = 24.0) -> float:
    """Std of |difference_factor|^2 over q1 - q2.

    For the sinc model the heavy 1/q^4 tails are integrated on a grid spanning
    ``nulls`` first-null distances and the remainder is added analytically.
    """
    pm = model.crystal.phasematch
    if isinstance(pm, GaussianAngular):
        return model.k_d * pm.delta_phi_rad / SINC_POSITION_COEFFICIENT
    q0 = sinc_null_scale(model)
    half = nulls * q0
    h = q0 / points_per_null
    m = int(np.ceil(half / h))
    c = minus_center(model)
    q = c + h * np.arange(-m, m + 1)
    dens = np.abs(difference_factor(model, q)) ** 2
    if dens[0] > 1e-6 * dens.max() or dens[-1] > 1e-6 * dens.max():
        raise GridTooNarrowError("singles distribution not negligible at the grid edge")
    norm = dens.sum() * h
    mean = (dens * q).sum() * h / norm
    second = (dens * (q - mean) ** 2).sum() * h
    # |G|^2 -> 2 / dkz^2 averaged over the oscillation, dkz ~ q^2 / (4 k)
    second += 2.0 * 32.0 * model.k_d ** 2 / (half + 0.5 * h)
    return float(np.sqrt(second / norm))


def emission_angular_width(model: BiphotonModel) -> float:
    """Std of the far-field singles angular intensity distribution, rad."""
    pm = model.crystal.phasematch
    if isinstance(pm, GaussianAngular):
        return pm.delta_phi_rad
    # singles q1 = (q+ + q-)/2 with q+ and q- independent under |A|^2
    var_single = 0.25 * (model.pump.momentum_std ** 2 + minus_intensity_std(model) ** 2)
    return float(np.sqrt(var_single) / model.k_d)
