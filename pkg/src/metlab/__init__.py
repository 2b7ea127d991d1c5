"""Finite-dimensional constructions for the semi-invertible multiplicative ergodic theorem."""

__version__ = "0.1.0"
