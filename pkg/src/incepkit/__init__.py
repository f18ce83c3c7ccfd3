"""Inception-v4 / Inception-ResNet micro-framework on numpy."""

__version__ = "0.1.0"
