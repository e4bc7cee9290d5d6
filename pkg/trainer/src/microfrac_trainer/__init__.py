"""Two-stage U-Net trainer for microstructure-to-failure image translation."""

__version__ = "0.1.0"
