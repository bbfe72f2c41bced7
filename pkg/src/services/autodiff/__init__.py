"""Minimal reverse-mode autodiff engine: tensors, ops, attention, ADAM, gradient checks."""
