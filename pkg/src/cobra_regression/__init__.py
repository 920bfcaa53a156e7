"""Nonlinear regression aggregation by machine-output consensus."""

__version__ = "0.1.0"
