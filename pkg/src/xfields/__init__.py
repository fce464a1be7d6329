"""Numerical laboratory for the crossed-field magnetic Stark Hamiltonian."""

__version__ = "0.1.0"
