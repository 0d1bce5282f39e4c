"""Causal-neighborhood robustness audits for fairness practices on tabular data."""

__version__ = "0.1.0"
