"""Mask-derived positional question/answer generation and evaluation tools for glacial lake imagery."""

__version__ = "0.1.0"
