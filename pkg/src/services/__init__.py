"""Services package for fogbench."""
