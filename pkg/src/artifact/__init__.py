"""Numerical laboratory for the renormalisation group analysis of the
two-dimensional Discrete Gaussian model."""

__version__ = "0.1.0"
