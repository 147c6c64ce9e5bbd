"""Reconstruct researcher migration histories from authorship records."""

__version__ = "0.1.0"
