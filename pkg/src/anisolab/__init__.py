"""Numerical laboratory for transfer operators of hyperbolic torus maps."""

__version__ = "0.1.0"
