"""Probit-transformation density estimation on the unit interval."""

__version__ = "0.1.0"
