"""Adaptive coding and modulation for land mobile satellite channels."""

__version__ = "0.1.0"
