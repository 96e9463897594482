"""Exact and semiclassical weak values for pre- and postselected ensembles."""
from .core import (CoherentBoundary, CoherentLabel, ComplexPhasePoint, KMSPoint, PolynomialSymbol,
                   PositionBoundary, Scenario, SpinBoundary, SpinLabel, WeakValueResult,
                   kms_inverse, kms_transform, load_scenario)
from .errors import WeaklineError

__all__ = ["CoherentBoundary", "CoherentLabel", "ComplexPhasePoint", "KMSPoint",
           "PolynomialSymbol", "PositionBoundary", "Scenario", "SpinBoundary", "SpinLabel",
           "WeakValueResult", "WeaklineError", "kms_inverse", "kms_transform", "load_scenario"]
