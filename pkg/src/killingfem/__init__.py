"""Killing and conformal Killing vector fields on surfaces by finite elements."""

__version__ = "0.1.0"
