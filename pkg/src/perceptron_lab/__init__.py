"""Numerical laboratory for the symmetric Ising perceptron."""

__version__ = "0.1.0"
