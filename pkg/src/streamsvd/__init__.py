"""Streaming truncated SVD (MOSES) with reference oracles, competing sketchers
and an experiment runner."""

__version__ = "0.1.0"
