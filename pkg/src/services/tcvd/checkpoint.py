"""
Model checkpoints.

Layout: b'FBCK', u32 version, u32 header length, UTF-8 JSON header
({"config": ..., "params": [{"name", "shape"}, ...], "extra": ...}), then every
parameter as float64 little-endian data in header order.
"""

import json
import logging
from pathlib import Path

import numpy as np

from services.tcvd.config import TcvdConfig
from services.tcvd.model import TcvdModel, load_parameters
from utils.errors import CheckpointError, ConfigError


logger = logging.getLogger(__name__)

MAGIC = b'FBCK'
VERSION = 1


def save_checkpoint(model, path, extra=None):
    """
    Write the model's config and parameters to path.

    Args:
        model: TcvdModel
        path: output file
        extra: JSON-serializable run metadata (config echo, steps, seed)
    """
    entries = []
    blobs = []
    for name, param in model.params.items():
        entries.append({'name': name, 'shape': list(param.shape)})
        blobs.append(np.ascontiguousarray(param.data, dtype='<f8').tobytes())
    header = json.dumps(
        {'config': model.config.as_dict(), 'params': entries, 'extra': extra or {}},
        sort_keys=True,
    ).encode('utf-8')

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(MAGIC)
        f.write(np.array([VERSION, len(header)], dtype='<u4').tobytes())
        f.write(header)
        for blob in blobs:
            f.write(blob)
    logger.info(f"Checkpoint saved to: {path} ({model.parameter_count()} parameters)")


def read_checkpoint(path):
    """
    Parse a checkpoint file without building a model.

    Returns:
        tuple: (header dict, dict name -> ndarray)

    Raises:
        CheckpointError: on a missing, truncated or foreign file
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a fogbench checkpoint")
    version, header_len = (int(v) for v in np.frombuffer(raw, dtype='<u4', count=2, offset=4))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[12:12 + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header: {e}") from None

    arrays = {}
    offset = 12 + header_len
    for entry in header.get('params', []):
        shape = tuple(entry['shape'])
        count = int(np.prod(shape)) if shape else 1
        if offset + 8 * count > len(raw):
            raise CheckpointError(f"{path}: truncated at parameter '{entry['name']}'")
        arrays[entry['name']] = np.frombuffer(raw, dtype='<f8', count=count, offset=offset).reshape(shape).copy()
        offset += 8 * count
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing byte(s)")
    return header, arrays


def load_checkpoint(path, expected_config=None):
    """
    Rebuild a TcvdModel from a checkpoint.

    Args:
        path: checkpoint file
        expected_config: TcvdConfig the caller requires (any when None)

    Returns:
        tuple: (TcvdModel, header dict)

    Raises:
        CheckpointError: if the file is malformed or its config differs from expected_config
    """
    header, arrays = read_checkpoint(path)
    try:
        config = TcvdConfig.from_dict(header['config'])
    except (KeyError, ConfigError) as e:
        raise CheckpointError(f"{path}: invalid stored config: {e}") from None
    if expected_config is not None and expected_config != config:
        raise CheckpointError(
            f"{path}: checkpoint config {config.as_dict()} does not match requested {expected_config.as_dict()}"
        )

    model = TcvdModel(config)
    expected = set(model.params)
    stored = set(arrays)
    if expected != stored:
        raise CheckpointError(f"{path}: parameter names differ from the model: {sorted(expected ^ stored)}")
    try:
        load_parameters(model, arrays)
    except ValueError as e:
        raise CheckpointError(f"{path}: {e}") from None
    logger.info(f"Loaded checkpoint {path}")
    return model, header
