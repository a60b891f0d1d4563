"""Numerical toolkit for null-controllability costs of heat equations."""

__version__ = "0.1.0"
