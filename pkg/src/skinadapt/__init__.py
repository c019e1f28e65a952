"""Holistic and patch-based skin segmentation with cross-domain adaptation."""

__version__ = "0.1.0"
