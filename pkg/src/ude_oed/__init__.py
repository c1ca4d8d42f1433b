"""Optimal experimental design for hybrid mechanistic/neural ODE models."""

__version__ = "0.1.0"
