"""Hilbert-space fragmentation and Stark localization on XX spin ladders."""

__version__ = "0.1.0"
