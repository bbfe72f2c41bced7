"""
Resizing and dihedral augmentation of frames.
"""

from dataclasses import dataclass

import numpy as np

from services.dataset.frames import Frame
from utils.errors import ContractError, ShapeError


def _corner_aligned_coords(source, target):
    if target == 1 or source == 1:
        return np.zeros(target)
    return np.linspace(0.0, source - 1.0, target)


def resize_array(pixels, height, width):
    """Bilinear resampling with corner-aligned sampling of an H x W (x C) array."""
    pixels = np.asarray(pixels, dtype=np.float64)
    rows = _corner_aligned_coords(pixels.shape[0], height)
    cols = _corner_aligned_coords(pixels.shape[1], width)

    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, pixels.shape[0] - 1)
    c1 = np.minimum(c0 + 1, pixels.shape[1] - 1)
    wr = rows - r0
    wc = cols - c0
    if pixels.ndim == 3:
        wr = wr[:, None, None]
        wc = wc[None, :, None]
    else:
        wr = wr[:, None]
        wc = wc[None, :]

    top = pixels[r0][:, c0] * (1.0 - wc) + pixels[r0][:, c1] * wc
    bottom = pixels[r1][:, c0] * (1.0 - wc) + pixels[r1][:, c1] * wc
    return top * (1.0 - wr) + bottom * wr


def resize(frame, size=224):
    """
    Resize a frame to size x size with corner-aligned bilinear sampling.

    Values are clamped to [0, 1].
    """
    if frame.size == (size, size):
        return frame
    return Frame.clipped(resize_array(frame.pixels, size, size))


@dataclass(frozen=True)
class DihedralTransform:
    """Optional horizontal flip followed by k quarter-turns counter-clockwise."""

    flip: bool = False
    k: int = 0

    def apply(self, pixels):
        out = pixels[:, ::-1] if self.flip else pixels
        return np.rot90(out, self.k, axes=(0, 1))

    def invert(self, pixels):
        out = np.rot90(pixels, -self.k, axes=(0, 1))
        return out[:, ::-1] if self.flip else out

    @property
    def outcome(self):
        return int(self.flip), self.k


def sample_transform(rng_seed):
    """Draw flip (p=0.5) and k uniform in {0,1,2,3} from a seeded generator."""
    rng = np.random.default_rng(rng_seed)
    flip = bool(rng.random() < 0.5)
    k = int(rng.integers(0, 4))
    return DihedralTransform(flip=flip, k=k)


def augment_frames(frames, rng_seed):
    """Apply one sampled dihedral transform to every frame in a group."""
    transform = sample_transform(rng_seed)
    size = frames[0].size
    for frame in frames:
        if frame.size != size:
            raise ShapeError(f"augmented frames must share a size, got {frame.size} and {size}")
    if transform.k != 0 and size[0] != size[1]:
        raise ContractError(f"rotation needs square frames, got {size[1]}x{size[0]}")
    return [Frame(np.ascontiguousarray(transform.apply(frame.pixels))) for frame in frames], transform


def augment(pair, rng_seed):
    """
    Apply the same random flip/rotation to a (foggy, clear) pair.

    Args:
        pair: (foggy Frame, clear Frame) of equal size
        rng_seed: seed for the transform draw

    Returns:
        tuple: (foggy Frame, clear Frame)
    """
    (foggy, clear), _ = augment_frames(list(pair), rng_seed)
    return foggy, clear
