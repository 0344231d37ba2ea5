"""Simulation of shape-changing leaf-out origami microfliers."""

__version__ = "0.1.0"
