"""Acoustic scene classification with edge-enhanced log-Mel features and class activation maps."""

__version__ = "0.1.0"
