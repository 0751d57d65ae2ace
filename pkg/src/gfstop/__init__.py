"""Gambler's-fallacy learning in two-period optimal stopping."""

__version__ = "0.1.0"
