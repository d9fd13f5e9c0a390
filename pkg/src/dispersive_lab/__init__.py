"""Pseudo-spectral laboratory for bilinear dispersive estimates."""

__version__ = "0.1.0"
