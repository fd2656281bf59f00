"""Hyperbolic knowledge graph completion on the Poincare ball."""

__version__ = "0.1.0"
