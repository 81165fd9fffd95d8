"""Parallel-set volumes, Minkowski and S-contents, and their local measures."""

__version__ = "0.1.0"
