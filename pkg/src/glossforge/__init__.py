"""Gloss, color and relief capture-to-print pipeline."""

__version__ = "0.1.0"
