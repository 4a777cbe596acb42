"""Strand-based neural hair simulation with physics-based self-supervision."""

__version__ = "0.1.0"
