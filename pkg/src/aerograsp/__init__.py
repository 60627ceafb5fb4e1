"""Simulation of an aerial fruit-harvesting UAV."""

__version__ = "0.1.0"
