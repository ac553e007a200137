"""Cycle-accurate simulation and analysis of heterogeneous 2D/3D networks-on-chip."""

__version__ = "0.1.0"
