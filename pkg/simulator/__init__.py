"""Symbolic household-rearrangement simulator with a clarification dialogue layer."""
