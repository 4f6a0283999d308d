"""Decay rates of variance for small-noise empirical measures."""

__version__ = "0.1.0"
