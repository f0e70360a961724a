"""Processors package: the stages of the patch-graph network."""
