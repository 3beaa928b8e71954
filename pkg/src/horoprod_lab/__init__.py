"""Simulation-and-verification laboratory for random trees, branching
boundary measures, and horospheric products."""

__version__ = "0.1.0"
