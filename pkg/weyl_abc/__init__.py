"""Schrodinger equation on truncated domains with m-function absorbing boundary conditions."""

__version__ = "0.1.0"
