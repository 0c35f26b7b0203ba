"""Pairwise signal-combination classifiers for spoken language identification."""

__version__ = "0.1.0"
