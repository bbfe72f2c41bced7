"""Benchmark commands and the built-in procedural scene."""
