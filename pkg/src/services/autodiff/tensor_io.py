"""
Raw tensor dumps for cross-checking against external oracles.

Layout: b'FBT1', u32 ndim, ndim x u32 dims, then float64 little-endian data.
"""

from pathlib import Path

import numpy as np

from services.autodiff.tensor import Tensor
from utils.errors import DataLoadError


MAGIC = b'FBT1'


def dump_tensor(tensor, path):
    """Write a tensor's data to path."""
    data = np.asarray(tensor.data, dtype='<f8')
    header = MAGIC + np.array([data.ndim, *data.shape], dtype='<u4').tobytes()
    Path(path).write_bytes(header + data.tobytes(order='C'))


def load_tensor(path):
    """Read a tensor written by dump_tensor."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise DataLoadError(f"{path}: not a tensor dump", failures=[(str(path), 'bad magic')])
    ndim = int(np.frombuffer(raw, dtype='<u4', count=1, offset=4)[0])
    shape = tuple(int(d) for d in np.frombuffer(raw, dtype='<u4', count=ndim, offset=8))
    offset = 8 + 4 * ndim
    count = int(np.prod(shape)) if shape else 1
    if len(raw) - offset != 8 * count:
        raise DataLoadError(f"{path}: truncated tensor dump", failures=[(str(path), 'size mismatch')])
    data = np.frombuffer(raw, dtype='<f8', count=count, offset=offset).reshape(shape)
    return Tensor(data)
