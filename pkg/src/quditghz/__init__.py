"""Exact simulation and analysis of heralded linear-optical qudit GHZ generation."""

__version__ = "0.1.0"
