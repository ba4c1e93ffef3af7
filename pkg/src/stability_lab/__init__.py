"""Measure and bound the algorithmic stability of classic classifiers."""

__version__ = "0.1.0"
