"""Ballistic transport simulator for discrete Schrodinger operators."""

__version__ = "0.1.0"
