"""Toolkit for unsolvable-problem synthesis, reliability evaluation, and alignment data generation."""

__version__ = "0.1.0"
