"""Intra-frame screen-content codec."""

__version__ = "0.1.0"
