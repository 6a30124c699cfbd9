"""Automated work records for retrofitted farm machinery."""

__version__ = "0.1.0"
