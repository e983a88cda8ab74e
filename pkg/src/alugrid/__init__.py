"""Parallel adaptive hierarchical grids over a simulated message-passing runtime."""

__version__ = "0.1.0"
