"""Dialogue state tracking with schema-graph masked attention."""

__version__ = "0.1.0"
