"""Desk-scale CFD operator-learning benchmark toolkit."""

__version__ = "0.1.0"
