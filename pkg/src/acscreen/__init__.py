"""Acoustic screening: learnable front-ends, sequence classifiers, score fusion."""

__version__ = "0.1.0"
