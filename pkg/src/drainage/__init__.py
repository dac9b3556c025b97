"""Drainage network (discrete directed spanning forest) simulator on Z^d."""

__version__ = "0.1.0"
