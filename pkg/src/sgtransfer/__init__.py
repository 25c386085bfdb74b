"""Relabel long-tailed scene-graph corpora by internal and external data transfer."""

__version__ = "0.1.0"
