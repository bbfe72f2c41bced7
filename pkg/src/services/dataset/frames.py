"""
Core image types: Frame, DepthMap, AcquisitionTag, FrameSequence.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from utils.errors import ContractError, ShapeError, TagParseError


MIN_SIDE = 8
LIGHTING_CONDITIONS = 6
DENSITY_ANCHORS = (0.015, 0.05, 0.15)
DENSITY_LABELS = {0.015: '0.015', 0.05: '0.05', 0.15: '0.15'}


def _frozen(array):
    array = np.array(array, dtype=np.float64)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Frame:
    """H x W x 3 image with channel values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = _frozen(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ShapeError(f"frame must be H x W x 3, got shape {pixels.shape}")
        if pixels.shape[0] < MIN_SIDE or pixels.shape[1] < MIN_SIDE:
            raise ShapeError(f"frame sides must be >= {MIN_SIDE}, got {pixels.shape[1]}x{pixels.shape[0]}")
        if not np.all(np.isfinite(pixels)) or pixels.min() < 0.0 or pixels.max() > 1.0:
            raise ContractError("frame values must be finite and lie in [0, 1]")
        object.__setattr__(self, 'pixels', pixels)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def size(self):
        return self.height, self.width

    @classmethod
    def clipped(cls, pixels):
        """Build a frame from values that may overshoot [0, 1] by rounding."""
        return cls(np.clip(pixels, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel depth in centimeters with a validity mask."""

    depth: np.ndarray
    valid_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        depth = _frozen(self.depth)
        if depth.ndim != 2:
            raise ShapeError(f"depth map must be H x W, got shape {depth.shape}")
        if self.valid_mask is None:
            mask = depth > 0
        else:
            mask = np.array(self.valid_mask, dtype=bool)
            if mask.shape != depth.shape:
                raise ShapeError(f"valid mask shape {mask.shape} does not match depth {depth.shape}")
            if np.any(depth[mask] <= 0):
                raise ContractError("depth must be > 0 wherever the mask is valid")
        mask.flags.writeable = False
        object.__setattr__(self, 'depth', depth)
        object.__setattr__(self, 'valid_mask', mask)

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]

    @property
    def size(self):
        return self.height, self.width


def density_label(density):
    """Directory label of a density anchor ('0.015', '0.05', '0.15'), 'none' for clear."""
    if density is None:
        return 'none'
    for anchor, label in DENSITY_LABELS.items():
        if abs(anchor - density) < 1e-12:
            return label
    raise TagParseError(f"unknown density {density}")


def parse_density(label):
    """Inverse of density_label."""
    if label in ('none', 'clear', ''):
        return None
    for anchor, text in DENSITY_LABELS.items():
        if label == text:
            return anchor
    raise TagParseError(f"unknown density label {label!r}; expected one of {list(DENSITY_LABELS.values())}")


@dataclass(frozen=True)
class AcquisitionTag:
    """Where and under which conditions a frame was captured."""

    position: int
    lighting: int
    density: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.lighting < LIGHTING_CONDITIONS:
            raise TagParseError(f"lighting must be in [0, {LIGHTING_CONDITIONS}), got {self.lighting}")
        if self.position < 0:
            raise TagParseError(f"position must be >= 0, got {self.position}")
        if self.density is not None:
            density_label(self.density)

    @property
    def condition(self):
        return self.lighting, self.density

    @property
    def is_clear(self):
        return self.density is None


@dataclass
class FrameSequence:
    """Ordered frames sharing one size, with optional per-position depth maps."""

    items: List[Tuple[Frame, AcquisitionTag]] = field(default_factory=list)
    depth_maps: Dict[int, DepthMap] = field(default_factory=dict)

    def __post_init__(self):
        if self.items:
            size = self.items[0][0].size
            for frame, tag in self.items:
                if frame.size != size:
                    raise ShapeError(
                        f"frame at position {tag.position} is {frame.size}, sequence frames are {size}"
                    )

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def frames(self):
        return [frame for frame, _ in self.items]

    @property
    def tags(self):
        return [tag for _, tag in self.items]

    def depth_for(self, tag):
        return self.depth_maps.get(tag.position)

    def with_frames(self, frames):
        """Same tags and depth maps, new pixels (used by restoration methods)."""
        if len(frames) != len(self.items):
            raise ContractError(f"expected {len(self.items)} frames, got {len(frames)}")
        return FrameSequence(list(zip(frames, self.tags)), dict(self.depth_maps))

    def as_array(self):
        """Stack frames into a T x H x W x 3 array."""
        return np.stack([frame.pixels for frame in self.frames])
