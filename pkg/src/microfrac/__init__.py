"""Fiber-composite microstructure synthesis, damage simulation, and dataset pipeline."""

__version__ = "0.1.0"
