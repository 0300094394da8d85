"""Differentiable quantum phase estimation at desk scale."""

__version__ = "0.1.0"
