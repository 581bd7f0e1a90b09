"""Kibble-Zurek ramps of the 2D staggered-field XX model with tensor networks."""

__version__ = "0.1.0"
