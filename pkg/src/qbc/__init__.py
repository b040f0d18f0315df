"""Simulation of a quantum bit commitment with a composite classical/quantum evidence."""

__version__ = "0.1.0"
