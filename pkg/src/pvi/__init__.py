"""Numerical laboratory for relativistic plasma-vacuum interface problems."""

__version__ = "0.1.0"
