"""Slit-scan coincidence measurements in the near field and the far field.

Position mode images the crystal exit face onto the slit planes at unit
magnification. Momentum mode places the slits in the focal plane of a lens,
where transverse wavenumber q lands at x = f q / k.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from . import engine as eng
from .engine import AxisGrid, Density2D, FactorizedAmplitude
from .errors import ConfigError, DataError, DegeneracyError, OverCorrectionError

POSITION = eng.POSITION
MOMENTUM = eng.MOMENTUM


@dataclass(frozen=True)
class ScanConfig:
    mode: str = POSITION
    slit_width_mm: float = 0.040
    focal_length_mm: float = 100.0
    scan_start_mm: float = -0.15
    scan_step_mm: float = 0.005
    scan_points: int = 61
    fixed_slit_mm: Optional[float] = None     # None: at the singles peak
    background_fraction: float = 0.01
    wing_width_factor: float = 10.0
    peak_counts: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (POSITION, MOMENTUM):
            raise ConfigError(f"unknown scan mode {self.mode!r}")
        if not self.slit_width_mm > 0:
            raise ConfigError("slit width must be positive")
        if not self.focal_length_mm > 0:
            raise ConfigError("focal length must be positive")
        if not self.scan_step_mm > 0:
            raise ConfigError("scan step must be positive")
        if self.scan_points < 8:
            raise ConfigError("a scan needs at least 8 points")
        if not 0 <= self.background_fraction < 1:
            raise ConfigError("background_fraction must lie in [0, 1)")
        if not self.wing_width_factor > 1:
            raise ConfigError("wing_width_factor must exceed 1")
        if self.peak_counts <= 0:
            raise ConfigError("peak_counts must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def positions(self) -> np.ndarray:
        # rounded so positions print cleanly and round-trip through CSV
        return np.round(self.scan_start_mm + self.scan_step_mm * np.arange(self.scan_points), 12)


@dataclass(frozen=True, eq=False)
class ScanResult:
    positions_mm: np.ndarray
    expected_rate: np.ndarray
    mode: str
    mapping_scale: float = 1.0
    counts: Optional[np.ndarray] = None
    fixed_slit_mm: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.counts is not None and len(self.counts) != len(self.positions_mm):
            raise DataError("counts and positions differ in length")
        if np.any(self.expected_rate < 0):
            raise DataError("expected rates must be non-negative")


def far_field_map(x_mm, f_mm: float, k: float):
    """Focal-plane position -> transverse wavenumber, q = k x / f."""
    if not (f_mm > 0 and k > 0):
        raise ConfigError("focal length and wavenumber must be positive")
    return k * np.asarray(x_mm, dtype=float) / f_mm


def far_field_position(q, f_mm: float, k: float):
    """Inverse of :func:`far_field_map`."""
    if not (f_mm > 0 and k > 0):
        raise ConfigError("focal length and wavenumber must be positive")
    return f_mm * np.asarray(q, dtype=float) / k


def scan_plane_density(amp: FactorizedAmplitude, cfg: ScanConfig, k: float,
                       feature_std_mm: float, samples_per_std: int = 32) -> Density2D:
    """Joint coincidence density in slit-plane coordinates covering the scan.

    ``feature_std_mm`` is the expected conditional width in the slit plane and
    sets the grid resolution.
    """
    if amp.representation != MOMENTUM:
        raise ConfigError("expected a momentum-space amplitude")
    a = cfg.slit_width_mm
    pos = cfg.positions
    lo, hi = pos[0], pos[-1]
    if cfg.fixed_slit_mm is not None:
        lo, hi = min(lo, cfg.fixed_slit_mm), max(hi, cfg.fixed_slit_mm)
    lo, hi = lo - a, hi + a
    h = min(feature_std_mm / samples_per_std, a / 16.0)
    n = eng.next_pow2((hi - lo) / h + 2)
    grid = AxisGrid(n, h, float(0.5 * (lo + hi)))
    if cfg.mode == POSITION:
        joint = amp_position(amp).joint_on(grid, grid)
    else:
        scale = k / cfg.focal_length_mm
        qgrid = AxisGrid(n, h * scale, grid.center * scale)
        joint = amp.joint_on(qgrid, qgrid)
        joint = eng.Joint2D(grid, grid, joint.values, POSITION)
    return eng.density_of(joint)


def amp_position(amp: FactorizedAmplitude) -> FactorizedAmplitude:
    return amp if amp.representation == POSITION else eng.to_position(amp)


def _overlap_weights(grid: AxisGrid, lo: float, hi: float) -> np.ndarray:
    """Fraction of each cell covered by [lo, hi]."""
    c = grid.points
    h = grid.spacing
    left = np.maximum(c - 0.5 * h, lo)
    right = np.minimum(c + 0.5 * h, hi)
    return np.clip((right - left) / h, 0.0, 1.0)


def _peak_position(d: Density2D) -> float:
    m = d.marginal(2).values
    best = np.flatnonzero(m >= m.max() * (1 - 1e-12))
    # ties toward the grid centre
    i = best[np.argmin(np.abs(best - d.grid2.n // 2))]
    return float(d.grid2.points[i])


def expected_scan(d: Density2D, cfg: ScanConfig, mapping_scale: float = 1.0) -> ScanResult:
    """Coincidence rate with slit 1 scanned and slit 2 held fixed.

    Each rate is the density integrated over the product of the two slit
    apertures. ``mapping_scale`` (rad/mm per mm) is recorded for momentum scans.
    """
    a = cfg.slit_width_mm
    pos = cfg.positions
    fixed = _peak_position(d) if cfg.fixed_slit_mm is None else cfg.fixed_slit_mm
    g1, g2 = d.grid1, d.grid2
    half1, half2 = 0.5 * g1.spacing, 0.5 * g2.spacing
    if (pos[0] - a / 2 < g1.lo - half1 or pos[-1] + a / 2 > g1.hi + half1
            or fixed - a / 2 < g2.lo - half2 or fixed + a / 2 > g2.hi + half2):
        raise ConfigError("scan range plus slit width falls outside the density grid")
    w2 = _overlap_weights(g2, fixed - a / 2, fixed + a / 2)
    col = d.values @ w2 * g2.spacing
    w1 = np.stack([_overlap_weights(g1, p - a / 2, p + a / 2) for p in pos])
    rate = w1 @ col * g1.spacing
    scale = mapping_scale if cfg.mode == MOMENTUM else 1.0
    meta = {"config": dataclasses.asdict(cfg), "seed": cfg.seed}
    return ScanResult(pos.copy(), np.clip(rate, 0.0, None), cfg.mode, scale, None, fixed, meta)


def curve_moments(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Mean and variance of a non-negative curve treated as a discrete density."""
    total = y.sum()
    if not total > 0:
        raise DegeneracyError("curve has no weight")
    p = y / total
    m = float(np.sum(p * x))
    return m, float(np.sum(p * (x - m) ** 2))


def add_wings(sr: ScanResult, cfg: ScanConfig) -> ScanResult:
    """Add a broad Gaussian pedestal of height ``background_fraction`` x peak."""
    if cfg.background_fraction == 0:
        return sr
    x, y = sr.positions_mm, sr.expected_rate
    _, var = curve_moments(x, y)
    center = x[np.argmax(y)]
    s = cfg.wing_width_factor * np.sqrt(var)
    wing = np.exp(-0.5 * ((x - center) / s) ** 2)
    meta = dict(sr.metadata, wing_std_mm=float(s), wing_center_mm=float(center))
    return dataclasses.replace(sr, expected_rate=y + cfg.background_fraction * y.max() * wing,
                               metadata=meta)


def sample_counts(sr: ScanResult, cfg: ScanConfig) -> ScanResult:
    """Poisson counts scaled so the peak bin has mean ``peak_counts``.

    The two scan modes draw from distinct streams of the same seed.
    """
    rng = np.random.default_rng([cfg.seed, 0 if sr.mode == POSITION else 1])
    peak = sr.expected_rate.max()
    if peak > 0:
        lam = cfg.peak_counts * sr.expected_rate / peak
    else:
        lam = np.zeros_like(sr.expected_rate)
    return dataclasses.replace(sr, counts=rng.poisson(lam).astype(np.int64))


def _core_sigma(x: np.ndarray, y: np.ndarray) -> float:
    """Gaussian-equivalent core width from the full width at half maximum."""
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    left = i
    while left > 0 and y[left] > half:
        left -= 1
    right = i
    while right < len(y) - 1 and y[right] > half:
        right += 1
    if y[left] > half or y[right] > half:
        return float(np.sqrt(curve_moments(x, y)[1]))
    xl = np.interp(half, [y[left], y[left + 1]], [x[left], x[left + 1]])
    xr = np.interp(half, [y[right], y[right - 1]], [x[right], x[right - 1]])
    return float((xr - xl) / (2.0 * np.sqrt(2.0 * np.log(2.0))))


def fit_background(x: np.ndarray, y: np.ndarray, core_sigmas: float = 4.0) -> np.ndarray:
    """Constant plus wide Gaussian fitted to the bins outside the core peak."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x0 = x[np.argmax(y)]
    sc = _core_sigma(x, y)
    outside = np.abs(x - x0) > core_sigmas * sc
    if outside.sum() < 4:
        # too few wing bins to fit a shape: use the outermost level
        return np.full_like(y, 0.5 * (y[:2].mean() + y[-2:].mean()))
    xo, yo = x[outside], y[outside]
    best = None
    for s in sc * np.geomspace(3.0, 100.0, 40):
        basis = np.column_stack([np.ones_like(xo), np.exp(-0.5 * ((xo - x0) / s) ** 2)])
        coef, resid = nnls(basis, yo)
        if best is None or resid < best[0]:
            best = (resid, s, coef)
    _, s, (c, b) = best
    return c + b * np.exp(-0.5 * ((x - x0) / s) ** 2)


def scan_variance(sr: ScanResult, use_counts: bool = True,
                  background_subtract: bool = False) -> float:
    """Variance of the normalized scan curve; (rad/mm)^2 for momentum scans."""
    if use_counts and sr.counts is not None:
        y = sr.counts.astype(float)
    else:
        y = np.asarray(sr.expected_rate, dtype=float)
    if background_subtract:
        y = np.clip(y - fit_background(sr.positions_mm, y), 0.0, None)
    if np.count_nonzero(y) < 3:
        raise DegeneracyError("scan curve has fewer than 3 non-zero bins")
    _, var = curve_moments(sr.positions_mm, y)
    return var * sr.mapping_scale ** 2


def slit_correction(raw_variance: float, slit_width: float) -> float:
    """Remove the scanning slit's rectangular second moment a^2/12."""
    rect = slit_width ** 2 / 12.0
    if slit_width > 0 and not raw_variance > rect:
        raise OverCorrectionError(
            f"raw variance {raw_variance:.4g} does not exceed slit term {rect:.4g}")
    return raw_variance - rect
