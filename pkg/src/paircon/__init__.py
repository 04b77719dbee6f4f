"""Supervised and self-supervised contrastive learning with cross-dataset batches."""

__version__ = "0.1.0"
