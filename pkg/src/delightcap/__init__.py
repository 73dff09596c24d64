"""Facial delighting prior with dataset-conditioned tokens, and a multi-view
albedo capture pipeline built on top of it."""
__version__ = "0.1.0"
