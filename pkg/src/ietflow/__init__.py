"""Exact interval exchanges, Rauzy-Veech induction, rigidity towers and special flows."""

from .iet import DomainError, IetSpec, InvalidIet, Permutation, apply, keane_check, orbit
from .scalar import Scalar

__version__ = "0.1.0"

__all__ = ["DomainError", "IetSpec", "InvalidIet", "Permutation", "Scalar", "apply", "keane_check", "orbit"]
