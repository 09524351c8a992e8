"""Capacity and rate-distortion computations for finite-alphabet channels and
sources with state information at either or both ends."""

__version__ = "0.1.0"
