"""Numerical laboratory for fractional semilinear heat equations with singular data."""
__version__ = "0.1.0"
