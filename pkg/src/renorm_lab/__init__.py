"""Numerical laboratory for renormalization of critical circle maps and commuting pairs."""

__version__ = "0.1.0"
