"""Numerical isoperimetry for uniformly log-concave measures and uniformly convex bodies."""

__version__ = "0.1.0"
