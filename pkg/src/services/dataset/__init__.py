"""Frame sequences, depth maps, dataset layout I/O, recomposition and training samples."""
