"""Rough-data semilinear heat flows: spectral solvers and executable bounds."""

__version__ = "0.1.0"
