"""Coupled vision/proprioception point-goal navigation simulator."""

__version__ = "0.1.0"
