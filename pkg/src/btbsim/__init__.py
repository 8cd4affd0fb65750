"""Trace-driven front-end simulator with pluggable branch-target-buffer models."""

__version__ = "0.1.0"
