"""Identification of errors-in-variables ARX models by iterative dynamic PCA."""

__version__ = "0.1.0"
