"""Utilities package: shared exception types."""
