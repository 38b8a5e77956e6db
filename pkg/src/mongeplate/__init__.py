"""Finite-difference solver for bending energy under a Monge-Ampere constraint."""

__version__ = "0.1.0"
