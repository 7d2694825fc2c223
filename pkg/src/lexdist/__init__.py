"""Trigger pairs, distance models and exponential language models over a trigram prior."""

__version__ = "0.1.0"
