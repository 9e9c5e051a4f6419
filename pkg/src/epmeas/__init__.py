"""Entropy production and fluctuation analysis of repeated quantum measurement processes."""

__version__ = "0.1.0"
