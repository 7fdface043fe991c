"""Coupled fluid, growing-solid and concentration solver on a periodic strip."""

__version__ = "0.1.0"
