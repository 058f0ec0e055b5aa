"""Sketch-guided 2D smoke simulation toolkit."""

__version__ = "0.1.0"
