"""
Shared fixtures for the fogbench test suite.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src directory to path for imports
sys.path.insert(0, str(Path(__file__).resolve().parent.parent / 'src'))

from services.dataset.frames import AcquisitionTag, DepthMap, Frame, FrameSequence  # noqa: E402


@pytest.fixture
def rng():
    """Seeded generator for reproducible random data."""
    return np.random.default_rng(42)


@pytest.fixture
def frame(rng):
    """A 16 x 16 RGB frame with values in [0.05, 0.95]."""
    return Frame(rng.uniform(0.05, 0.95, size=(16, 16, 3)))


@pytest.fixture
def make_sequence(rng):
    """Factory for a short random sequence with flat depth maps."""

    def _make(length=4, size=16, lighting=0, density=None, depth=500.0):
        items = [
            (Frame(rng.uniform(0.05, 0.95, size=(size, size, 3))), AcquisitionTag(position, lighting, density))
            for position in range(length)
        ]
        depth_maps = {position: DepthMap(np.full((size, size), depth)) for position in range(length)}
        return FrameSequence(items, depth_maps)

    return _make
