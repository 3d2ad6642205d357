"""Desk-scale simulator of cultural and architectural co-evolution of
emergent languages in referential games."""

__version__ = "0.1.0"
