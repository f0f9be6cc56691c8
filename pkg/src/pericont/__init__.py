"""Toolkit for T-periodic solutions of cyclic systems by degree and continuation."""

__version__ = "0.1.0"

from . import averaging, bvp, continuation, degree, expr, phi_ops, systems, verify
from .errors import PericontError

__all__ = [
    "averaging",
    "bvp",
    "continuation",
    "degree",
    "expr",
    "phi_ops",
    "systems",
    "verify",
    "PericontError",
    "__version__",
]
