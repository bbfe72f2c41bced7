"""Image quality metrics and benchmark reports."""
