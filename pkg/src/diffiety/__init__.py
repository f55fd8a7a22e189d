"""Diffieties, standard bases, symmetries and involutivity tests."""

__version__ = "0.1.0"
