"""Penalized obstacle problems for thin flexural shells and their limit model."""

__version__ = "0.1.0"
