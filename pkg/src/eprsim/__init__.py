"""Desk-scale simulation of the momentum-position EPR experiment with downconverted photons."""
from .config import RunConfig
from .criteria import CriteriaReport
from .model import BiphotonModel, Crystal, GaussianAngular, ParaxialSinc, PumpBeam

__all__ = ["BiphotonModel", "Crystal", "CriteriaReport", "GaussianAngular", "ParaxialSinc",
           "PumpBeam", "RunConfig"]
__version__ = "0.1.0"
