"""Constructive machinery behind density-increment bounds for progressions."""

__version__ = "0.1.0"
