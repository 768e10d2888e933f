"""Certified polynomial bounds for linearly-solvable stochastic optimal control."""

__version__ = "0.1.0"
