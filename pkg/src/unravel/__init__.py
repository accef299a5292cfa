"""Optimized trajectory unraveling of noisy quantum dynamics."""

__version__ = "0.1.0"
