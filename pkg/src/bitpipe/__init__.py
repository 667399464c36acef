"""Bit-pipe bounding models for networks of noisy channels."""

__version__ = "0.1.0"
