"""Bending-energy minimization for planar curves above an obstacle."""

__version__ = "0.1.0"
