"""Numerical verification toolkit for Douglas general (alpha, beta)-metrics."""

__version__ = "0.1.0"
