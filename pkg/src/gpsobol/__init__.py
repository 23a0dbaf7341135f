"""Sobol' sensitivity indices estimated through a Gaussian-process metamodel."""

__version__ = "0.1.0"
