"""Numerical laboratory for scaling limits of self-conformal measures."""

__version__ = "0.1.0"
