"""Utilities package for fogbench."""
