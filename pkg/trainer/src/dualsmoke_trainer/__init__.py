"""Toy-scale two-stage sketch-to-flow trainer."""

__version__ = "0.1.0"
