"""Hybrid quantum-classical next-best-view planning on a simulated register."""

__version__ = "0.1.0"
