"""Desk-scale polystore: three embedded engines behind islands, shims and casts."""

__version__ = "0.1.0"
