"""Courier pick-up/delivery route prediction toolkit."""

__version__ = "0.1.0"
