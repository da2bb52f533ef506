"""Weak-field phase-only control toolkit for a four-level open quantum system."""

__version__ = "0.1.0"
