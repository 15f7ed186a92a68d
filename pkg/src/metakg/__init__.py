"""Numerical laboratory for slowly decaying bound states of the cubic Klein-Gordon equation."""

__version__ = "0.1.0"
