"""Pseudospectral laboratory for the focusing mass-critical nonlinear Schrödinger equation."""

__version__ = "0.1.0"
