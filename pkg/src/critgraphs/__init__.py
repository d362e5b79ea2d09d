"""Simulation toolkit for critical inhomogeneous random graphs and their scaling limits."""
from .weights import ParameterError

__version__ = "0.1.0"
__all__ = ["ParameterError", "__version__"]
