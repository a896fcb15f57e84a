"""Activist proxy-fight communication alignment with institutional voting preferences."""

__version__ = "0.1.0"
