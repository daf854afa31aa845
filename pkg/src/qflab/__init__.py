"""Numerical laboratory for almost-Fuchsian paths built from filling pairs
of weighted multicurves: flat surfaces, uniformisation, the minimal-surface
Gauss equation, Schwarzians at infinity and their half-pipe limits."""

__version__ = "0.1.0"
