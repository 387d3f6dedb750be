"""Simulation and coupling-gain certification for diffusively coupled open qubit networks."""

__version__ = "0.1.0"
