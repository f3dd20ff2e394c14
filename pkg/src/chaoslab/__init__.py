"""Wick-normalized partition functions of disordered spin systems and their chaos expansions."""

from .errors import ChaosLabError

__version__ = "0.1.0"

__all__ = ["ChaosLabError", "__version__"]
