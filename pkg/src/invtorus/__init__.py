"""Weighted harmonic fields, winding numbers and straight field-line charts on 2-tori."""

__version__ = "0.1.0"
