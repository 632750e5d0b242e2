"""Rational and polynomial observer synthesis for rational systems."""

__version__ = "0.1.0"
