"""Inferred variances, EPR and separability verdicts, closed-form predictions."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import model as mdl
from .engine import Density1D
from .errors import DataError

EPR_BOUND = 0.25
MANCINI_BOUND = 1.0


class Verdict(NamedTuple):
    violated: bool
    margin: float          # bound / product
    log10_margin: float


def _conditional_variance(cond: Density1D, sign: float) -> float:
    if cond.conditioned_on is None:
        raise DataError("conditional density carries no conditioning value")
    z = cond.grid.points + sign * cond.conditioned_on
    w = cond.values * cond.grid.spacing
    m = np.sum(w * z)
    return float(np.sum(w * z ** 2) - m ** 2)


def inferred_position_variance(cond: Density1D) -> float:
    """Variance of x1 - x2 under P(x1 | x2), mm^2."""
    return _conditional_variance(cond, -1.0)


def inferred_momentum_variance(cond: Density1D) -> float:
    """Variance of p1 + p2 under P(p1 | p2), (hbar/mm)^2."""
    return _conditional_variance(cond, +1.0)


def variance_product(dx2: float, dp2: float) -> float:
    if dx2 < 0 or dp2 < 0:
        raise ValueError("variances must be non-negative")
    return dx2 * dp2


def _verdict(product: float, bound: float) -> Verdict:
    if product < 0:
        raise ValueError("product must be non-negative")
    margin = bound / product if product > 0 else float("inf")
    return Verdict(product < bound, margin, float(np.log10(margin)))


def epr_verdict(product: float) -> Verdict:
    """EPR paradox demonstrated when the inferred product is below hbar^2/4."""
    return _verdict(product, EPR_BOUND)


def mancini_verdict(dx12_sq: float, dp12_sq: float) -> Verdict:
    """Separable states obey (dx12)^2 (dp12)^2 >= hbar^2."""
    return _verdict(variance_product(dx12_sq, dp12_sq), MANCINI_BOUND)


def theory_predictions(model: mdl.BiphotonModel) -> tuple[float, float, float]:
    """(dx, dp, product) from the pump-limited and emission-limited widths."""
    dp = 1.0 / (2.0 * model.pump.width_w_mm)
    dx = mdl.SINC_POSITION_COEFFICIENT / (model.k_d * mdl.emission_angular_width(model))
    return dx, dp, (dx * dp) ** 2


@dataclass(frozen=True)
class CriteriaReport:
    dx_inf_mm: float
    dp_inf_invmm: float
    dx12_mm: float
    dp12_invmm: float
    theory_dx_mm: float
    theory_dp_invmm: float
    theory_product_hbar2: float
    provenance: str
    product_hbar2: float = field(init=False)
    joint_product_hbar2: float = field(init=False)
    epr_bound: float = field(init=False, default=EPR_BOUND)
    mancini_bound: float = field(init=False, default=MANCINI_BOUND)
    epr_violated: bool = field(init=False)
    inseparable: bool = field(init=False)
    epr_margin: float = field(init=False)
    mancini_margin: float = field(init=False)

    def __post_init__(self):
        for name in ("dx_inf_mm", "dp_inf_invmm", "dx12_mm", "dp12_invmm"):
            v = getattr(self, name)
            if not (v >= 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("product_hbar2", (self.dx_inf_mm * self.dp_inf_invmm) ** 2)
        set_("joint_product_hbar2", (self.dx12_mm * self.dp12_invmm) ** 2)
        epr = epr_verdict(self.product_hbar2)
        man = mancini_verdict(self.dx12_mm ** 2, self.dp12_invmm ** 2)
        set_("epr_violated", epr.violated)
        set_("inseparable", man.violated)
        set_("epr_margin", epr.margin)
        set_("mancini_margin", man.margin)
        assert self.epr_violated == (self.product_hbar2 < EPR_BOUND)
        assert self.inseparable == (self.joint_product_hbar2 < MANCINI_BOUND)

    @classmethod
    def from_variances(cls, dx2: float, dp2: float, dx12_sq: float, dp12_sq: float,
                       model: mdl.BiphotonModel, provenance: str) -> "CriteriaReport":
        tdx, tdp, tprod = theory_predictions(model)
        return cls(float(np.sqrt(dx2)), float(np.sqrt(dp2)), float(np.sqrt(dx12_sq)),
                   float(np.sqrt(dp12_sq)), tdx, tdp, tprod, provenance)

    def as_dict(self) -> dict:
        return asdict(self)
