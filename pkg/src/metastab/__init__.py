"""Metastable hierarchy of one-dimensional diffusions with periodic coefficients."""

from .errors import MetastabError, NumericalFailure, ValidationError
from .landscape import CoefficientSpec, Landscape, barrier, find_equilibria, potential, wells
from .hierarchy import Hierarchy, HierarchyLevel, build_hierarchy, time_scale, verify_postulates

__all__ = [
    "CoefficientSpec", "Landscape", "Hierarchy", "HierarchyLevel",
    "MetastabError", "NumericalFailure", "ValidationError",
    "barrier", "build_hierarchy", "find_equilibria", "potential", "time_scale",
    "verify_postulates", "wells",
]

__version__ = "0.1.0"
