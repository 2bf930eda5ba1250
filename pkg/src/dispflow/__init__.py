"""Numerical laboratory for a fourth-order dispersive flow of curves on S^2."""

__version__ = "0.1.0"
