"""Coherence witnesses from population measurements."""

__version__ = "0.1.0"
