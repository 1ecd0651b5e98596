"""Compressed sensing with structured blocks of measurements."""

__version__ = "0.1.0"
