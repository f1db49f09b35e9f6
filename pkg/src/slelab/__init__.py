"""Numerical laboratory for chordal SLE: Loewner flow, Green's functions and natural length."""

__version__ = "0.1.0"
