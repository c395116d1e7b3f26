"""Generalist muscle-transformer policies over a compositional sensorimotor vocabulary."""

__version__ = "0.1.0"
