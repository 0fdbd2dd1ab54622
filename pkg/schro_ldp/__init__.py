"""Entropic optimal transport, Schrödinger bridges and large-deviation checks."""

__version__ = "0.1.0"
