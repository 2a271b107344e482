"""Grids, Fourier transforms between momentum and position, and densities.

The continuous transform convention is

    psi(x) = (2 pi)^(-1/2) * integral A(q) exp(i q x) dq

discretized so that sum |psi|^2 dx == sum |A|^2 dq exactly (Parseval) on the
dual grid ``dx = 2 pi / (n dq)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import model as mdl
from .errors import ConfigError, DegeneracyError, GridTooNarrowError, SliceUnderflowError

MOMENTUM = "momentum"
POSITION = "position"
_DIRECT_CHUNK = 256


def next_pow2(n: float) -> int:
    return 1 << max(0, int(np.ceil(np.log2(max(n, 1)))))


@dataclass(frozen=True)
class AxisGrid:
    """Uniform grid of ``n`` points; index ``n // 2`` sits on ``center``."""

    n: int
    spacing: float
    center: float = 0.0

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ConfigError(f"grid size must be a power of two, got {self.n}")
        if not self.spacing > 0:
            raise ConfigError("grid spacing must be positive")

    @property
    def points(self) -> np.ndarray:
        return self.center + (np.arange(self.n) - self.n // 2) * self.spacing

    @property
    def extent(self) -> float:
        return self.n * self.spacing

    @property
    def lo(self) -> float:
        return self.center - (self.n // 2) * self.spacing

    @property
    def hi(self) -> float:
        return self.center + (self.n - 1 - self.n // 2) * self.spacing

    def dual(self, center: float = 0.0) -> "AxisGrid":
        return AxisGrid(self.n, 2.0 * np.pi / (self.n * self.spacing), center)

    def snap(self, value: float) -> int:
        """Index of the grid point nearest ``value``."""
        i = int(np.rint((value - self.center) / self.spacing)) + self.n // 2
        if not 0 <= i < self.n:
            raise ConfigError(f"value {value} lies outside the grid [{self.lo}, {self.hi}]")
        return i


def _centered_dft(a: np.ndarray, axis: int, inverse: bool) -> np.ndarray:
    # sum_m a_m exp(+-2 pi i m l / n) with m, l centred on n // 2
    a = np.fft.ifftshift(a, axes=axis)
    if inverse:
        b = np.fft.ifft(a, axis=axis) * a.shape[axis]
    else:
        b = np.fft.fft(a, axis=axis)
    return np.fft.fftshift(b, axes=axis)


def transform_axis(values: np.ndarray, grid: AxisGrid, axis: int = 0,
                   to_position: bool = True, dual_center: float = 0.0):
    """Unitary transform of ``values`` along ``axis``; returns (values, dual grid)."""
    dual = grid.dual(dual_center)
    sign = 1.0 if to_position else -1.0
    m = np.arange(grid.n) - grid.n // 2
    shape = [1] * values.ndim
    shape[axis] = grid.n
    pre = np.exp(sign * 1j * m * grid.spacing * dual.center).reshape(shape)
    post = np.exp(sign * 1j * grid.center * (dual.center + m * dual.spacing)).reshape(shape)
    out = _centered_dft(values * pre, axis, inverse=to_position)
    return out * post * (grid.spacing / np.sqrt(2.0 * np.pi)), dual


def direct_transform(values: np.ndarray, grid: AxisGrid, points, to_position: bool = True):
    """Evaluate the transform of 1-D samples at arbitrary points by direct summation."""
    points = np.asarray(points, dtype=float)
    flat = points.ravel()
    sign = 1.0 if to_position else -1.0
    src = grid.points
    out = np.empty(flat.size, dtype=complex)
    for s in range(0, flat.size, _DIRECT_CHUNK):
        chunk = flat[s:s + _DIRECT_CHUNK]
        out[s:s + _DIRECT_CHUNK] = np.exp(sign * 1j * np.outer(chunk, src)) @ values
    return (out * (grid.spacing / np.sqrt(2.0 * np.pi))).reshape(points.shape)


@dataclass(frozen=True, eq=False)
class Factor1D:
    """One factor of a factorized amplitude, sampled on ``grid``.

    ``exact`` optionally evaluates the factor analytically in its own
    representation; otherwise off-grid values use trigonometric interpolation.
    """

    grid: AxisGrid
    values: np.ndarray
    representation: str = MOMENTUM
    exact: Optional[Callable] = None

    def transformed(self, dual_center: float = 0.0) -> "Factor1D":
        to_pos = self.representation == MOMENTUM
        vals, dual = transform_axis(self.values, self.grid, 0, to_pos, dual_center)
        return Factor1D(dual, vals, POSITION if to_pos else MOMENTUM)

    def conjugate_at(self, points) -> np.ndarray:
        return direct_transform(self.values, self.grid, points, self.representation == MOMENTUM)

    def at(self, points) -> np.ndarray:
        if self.exact is not None:
            return np.asarray(self.exact(np.asarray(points, dtype=float)), dtype=complex)
        return self.transformed().conjugate_at(points)

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.spacing)


@dataclass(frozen=True, eq=False)
class FactorizedAmplitude:
    """A(q1, q2) = F(q1 + q2) G(q1 - q2), or its position image.

    In position representation psi(x1, x2) = F~(x+) G~(x-) / 2 with
    x+ = (x1 + x2)/2 conjugate to q+ and x- = (x1 - x2)/2 conjugate to q-.
    """

    plus: Factor1D
    minus: Factor1D
    representation: str = MOMENTUM

    @property
    def plus_axis(self) -> AxisGrid:
        return self.plus.grid

    @property
    def minus_axis(self) -> AxisGrid:
        return self.minus.grid

    @classmethod
    def from_model(cls, model: mdl.BiphotonModel, plus_axis: AxisGrid,
                   minus_axis: AxisGrid) -> "FactorizedAmplitude":
        f = lambda q: mdl.sum_factor(model, q)
        g = lambda q: mdl.difference_factor(model, q)
        return cls(Factor1D(plus_axis, f(plus_axis.points), MOMENTUM, f),
                   Factor1D(minus_axis, g(minus_axis.points), MOMENTUM, g))

    def evaluate(self, u1, u2) -> np.ndarray:
        u1 = np.asarray(u1, dtype=float)
        u2 = np.asarray(u2, dtype=float)
        if self.representation == MOMENTUM:
            return self.plus.at(u1 + u2) * self.minus.at(u1 - u2)
        return 0.5 * self.plus.at(0.5 * (u1 + u2)) * self.minus.at(0.5 * (u1 - u2))

    def joint_on(self, grid1: AxisGrid, grid2: AxisGrid) -> "Joint2D":
        """Sample the joint amplitude on a product grid."""
        if not np.isclose(grid1.spacing, grid2.spacing, rtol=1e-12):
            u1, u2 = np.meshgrid(grid1.points, grid2.points, indexing="ij")
            return Joint2D(grid1, grid2, self.evaluate(u1, u2), self.representation)
        # sums and differences of equally spaced grids fall on a lattice
        h = grid1.spacing
        i = np.arange(grid1.n)[:, None]
        j = np.arange(grid2.n)[None, :]
        s = grid1.lo + grid2.lo + h * np.arange(grid1.n + grid2.n - 1)
        d = grid1.lo - grid2.hi + h * np.arange(grid1.n + grid2.n - 1)
        if self.representation == MOMENTUM:
            fs, gd = self.plus.at(s), self.minus.at(d)
            vals = fs[i + j] * gd[i - j + grid2.n - 1]
        else:
            fs, gd = self.plus.at(0.5 * s), self.minus.at(0.5 * d)
            vals = 0.5 * fs[i + j] * gd[i - j + grid2.n - 1]
        return Joint2D(grid1, grid2, vals, self.representation)


@dataclass(frozen=True, eq=False)
class Joint2D:
    grid1: AxisGrid
    grid2: AxisGrid
    values: np.ndarray
    representation: str = MOMENTUM

    @classmethod
    def from_model(cls, model: mdl.BiphotonModel, grid1: AxisGrid, grid2: AxisGrid) -> "Joint2D":
        q1, q2 = np.meshgrid(grid1.points, grid2.points, indexing="ij")
        return cls(grid1, grid2, mdl.biphoton_amplitude(model, q1, q2), MOMENTUM)

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid1.spacing * self.grid2.spacing)


def _switch(amp, to_position: bool):
    if isinstance(amp, FactorizedAmplitude):
        return FactorizedAmplitude(amp.plus.transformed(), amp.minus.transformed(),
                                   POSITION if to_position else MOMENTUM)
    v, g1 = transform_axis(amp.values, amp.grid1, 0, to_position)
    v, g2 = transform_axis(v, amp.grid2, 1, to_position)
    return Joint2D(g1, g2, v, POSITION if to_position else MOMENTUM)


def to_position(amp):
    """Near-field (position) representation of a momentum-space amplitude."""
    if amp.representation != MOMENTUM:
        raise ConfigError("amplitude is already in position representation")
    return _switch(amp, True)


def to_momentum(amp):
    if amp.representation != POSITION:
        raise ConfigError("amplitude is already in momentum representation")
    return _switch(amp, False)


@dataclass(frozen=True, eq=False)
class Density1D:
    grid: AxisGrid
    values: np.ndarray
    representation: str = MOMENTUM
    conditioned_on: Optional[float] = None

    def mean(self) -> float:
        return float(np.sum(self.values * self.grid.points) * self.grid.spacing)

    def variance(self) -> float:
        x = self.grid.points
        m = self.mean()
        return float(np.sum(self.values * (x - m) ** 2) * self.grid.spacing)

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance()))


@dataclass(frozen=True, eq=False)
class Density2D:
    grid1: AxisGrid
    grid2: AxisGrid
    values: np.ndarray
    representation: str = MOMENTUM

    @property
    def cell(self) -> float:
        return self.grid1.spacing * self.grid2.spacing

    def marginal(self, axis: int) -> Density1D:
        """Density of coordinate ``axis`` (1 or 2), the other integrated out."""
        if axis == 1:
            return Density1D(self.grid1, self.values.sum(axis=1) * self.grid2.spacing,
                             self.representation)
        return Density1D(self.grid2, self.values.sum(axis=0) * self.grid1.spacing,
                         self.representation)


@dataclass(frozen=True, eq=False)
class FactorizedDensity:
    plus: Density1D
    minus: Density1D


def _normalized(values: np.ndarray, cell: float) -> np.ndarray:
    total = values.sum() * cell
    if not total > 0 or not np.isfinite(total):
        raise DegeneracyError("amplitude is identically zero; density undefined")
    return values / total


def density_of(amp):
    """Born-rule density |amp|^2, normalized to unit integral on its grid."""
    if isinstance(amp, Factor1D):
        return Density1D(amp.grid, _normalized(np.abs(amp.values) ** 2, amp.grid.spacing),
                         amp.representation)
    if isinstance(amp, FactorizedAmplitude):
        return FactorizedDensity(density_of(amp.plus), density_of(amp.minus))
    if isinstance(amp, Joint2D):
        cell = amp.grid1.spacing * amp.grid2.spacing
        return Density2D(amp.grid1, amp.grid2, _normalized(np.abs(amp.values) ** 2, cell),
                         amp.representation)
    raise TypeError(f"unsupported amplitude type {type(amp).__name__}")


def conditional_slice(d: Density2D, fixed_axis: int, fixed_value: float) -> Density1D:
    """P(u_other | u_fixed = fixed_value), with the condition snapped to the grid."""
    if fixed_axis == 2:
        i = d.grid2.snap(fixed_value)
        row, grid, snapped = d.values[:, i], d.grid1, d.grid2.points[i]
    elif fixed_axis == 1:
        i = d.grid1.snap(fixed_value)
        row, grid, snapped = d.values[i, :], d.grid2, d.grid1.points[i]
    else:
        raise ValueError("fixed_axis must be 1 or 2")
    total = row.sum() * grid.spacing
    if total < 1e-12:
        raise SliceUnderflowError(f"conditional slice at {fixed_value} has negligible weight")
    return Density1D(grid, row / total, d.representation, float(snapped))


def linear_combo_variance(d: Density2D, a: float, b: float) -> float:
    """Variance of a*u1 + b*u2 under the density."""
    u1 = d.grid1.points[:, None]
    u2 = d.grid2.points[None, :]
    z = a * u1 + b * u2
    w = d.values * d.cell
    m1 = np.sum(w * z)
    return float(np.sum(w * (z - m1) ** 2))


def factor_stds(model: mdl.BiphotonModel) -> tuple[float, float]:
    """Momentum-intensity stds of the q+ and q- factors."""
    sp = model.pump.momentum_std
    sm = mdl.minus_intensity_std(model)
    if not (sp > 0 and sm > 0):
        raise DegeneracyError("pump momentum std and emission width must be non-zero")
    return sp, sm


def build_grids(model: mdl.BiphotonModel, oversample: float = 4.0,
                samples_per_std: int = 32, min_n: int = 4096) -> tuple[AxisGrid, AxisGrid]:
    """Momentum grids for q+ and q-.

    Spacing puts ``samples_per_std`` points inside one intensity std of each
    factor; the extent covers at least ``oversample`` amplitude stds (sqrt(2)
    intensity stds) either side. ``min_n`` keeps the dual position grids fine
    enough to resolve the conjugate widths.
    """
    if oversample < 4:
        raise ConfigError("oversample must be at least 4")
    sp, sm = factor_stds(model)
    n = next_pow2(max(min_n, 64, 2.0 * np.sqrt(2.0) * oversample * samples_per_std))
    plus = AxisGrid(n, sp / samples_per_std, 0.0)
    minus = AxisGrid(n, sm / samples_per_std, mdl.minus_center(model))
    return plus, minus


def factorized_amplitude(model: mdl.BiphotonModel, oversample: float = 4.0,
                         min_n: int = 4096, samples_per_std: int = 32) -> FactorizedAmplitude:
    plus, minus = build_grids(model, oversample, samples_per_std, min_n)
    amp = FactorizedAmplitude.from_model(model, plus, minus)
    if isinstance(model.crystal.phasematch, mdl.ParaxialSinc):
        g = np.abs(amp.minus.values) ** 2
        if max(g[0], g[-1]) > 1e-6 * g.max():
            raise GridTooNarrowError("q- grid too narrow for the sinc emission tails")
    return amp


def build_joint_grids(model: mdl.BiphotonModel, max_n: int = 2048) -> AxisGrid:
    """Square (q1, q2) grid for the generic 2-D path."""
    sp, sm = factor_stds(model)
    h = sp / 2.0
    # covers q1 - q2 to ~8 std and resolves x1 - x2 on the dual grid
    n = next_pow2(16.0 * sm / h)
    if n > max_n:
        raise GridTooNarrowError(f"2-D grid would need n={n} > {max_n}")
    return AxisGrid(n, h, 0.0)
