"""Simulation and optimization of RIS-assisted integrated sensing and communication."""

__version__ = "0.1.0"
