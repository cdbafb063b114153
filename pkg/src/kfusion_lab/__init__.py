"""Controlled K-fusion frame laboratory."""

__version__ = "0.1.0"
