"""Numerical tools for left-invariant sub-Riemannian metrics on nilpotent groups."""

__version__ = "0.1.0"
