"""Evaluation, reward, and alignment toolkit for crystal-structure generators."""

__version__ = "0.1.0"
