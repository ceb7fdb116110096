"""Numerical classification of simple singularities of smooth maps."""

__version__ = "0.1.0"
