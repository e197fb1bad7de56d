"""Conformal prediction intervals for line-edge-roughness estimation on simulated SEM images."""

__version__ = "0.1.0"
