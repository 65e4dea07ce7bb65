"""Detect anycast site flipping caused by on-path load balancing."""

__version__ = "0.1.0"
