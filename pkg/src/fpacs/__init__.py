"""Simulation and reconstruction toolkit for focal-plane-array compressive sensing."""

__version__ = "0.1.0"
