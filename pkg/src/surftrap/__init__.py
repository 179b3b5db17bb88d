"""Desk-scale simulator of single-ion hyperfine-qubit experiments in a
surface-electrode RF trap."""

__version__ = "0.1.0"
