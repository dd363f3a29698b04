"""Adaptive tests over discrete Bayesian and credal networks."""

__version__ = "0.1.0"
