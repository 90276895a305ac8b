"""Interpretable top-down action recognition from object and hand tracks."""

__version__ = "0.1.0"
