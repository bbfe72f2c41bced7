"""
Built-in synthetic scene: a saturated textured backdrop, a moving rectangle,
a linear depth ramp and a black & white contrast panel at constant depth.
"""

import logging
from dataclasses import dataclass

import numpy as np

from services.dataset.frames import AcquisitionTag, DepthMap, Frame, FrameSequence, LIGHTING_CONDITIONS
from services.dataset.transforms import resize_array
from services.fog.panel import PanelROI, Rect


logger = logging.getLogger(__name__)

WARM = np.array([1.0, 0.85, 0.7])
COOL = np.array([0.7, 0.85, 1.0])
WHITE_INTENSITIES = (1.0, 0.9, 0.8, 0.7, 0.6)


@dataclass(frozen=True)
class SceneSpec:
    """Geometry of the procedural scene. Depths are in centimeters."""

    size: int = 64
    frames: int = 12
    seed: int = 0
    near_depth: float = 100.0
    panel_depth: float = 1000.0
    panel_black: float = 0.2
    panel_white: float = 1.0
    texture_cells: int = 6

    def panel_roi(self):
        """Black and white halves of a panel in the top-right corner (the far end of the ramp)."""
        side = max(self.size // 4, 2)
        margin = max(self.size // 32, 1)
        x1 = self.size - margin
        x0 = x1 - side
        half = x0 + side // 2
        return PanelROI(
            black_region=Rect(x0, margin, half, margin + side),
            white_region=Rect(half, margin, x1, margin + side),
        )


def lighting_gain(lighting, height, width):
    """
    Per-pixel RGB illumination of a lighting condition.

    Condition 0 blends warm light on the left into cool light on the right;
    conditions 1..5 are white light of decreasing intensity.
    """
    if lighting == 0:
        ramp = np.linspace(0.0, 1.0, width)[None, :, None]
        gain = WARM[None, None, :] * (1.0 - ramp) + COOL[None, None, :] * ramp
        return np.broadcast_to(gain, (height, width, 3))
    return np.full((height, width, 3), WHITE_INTENSITIES[lighting - 1])


def _texture(spec, rng):
    cells = spec.texture_cells
    coarse = rng.uniform(0.0, 0.2, size=(cells, cells, 3))
    rows, cols = np.indices((cells, cells))
    bright = rng.integers(0, 3, size=(cells, cells))
    coarse[rows, cols, bright] = rng.uniform(0.6, 0.95, size=(cells, cells))
    texture = resize_array(coarse, spec.size, spec.size)
    texture += rng.uniform(-0.03, 0.03, size=texture.shape)
    return np.clip(texture, 0.02, 0.98)


def depth_ramp(spec):
    """Depth grows linearly from near_depth at the bottom row to panel_depth at the top."""
    rows = np.linspace(spec.panel_depth, spec.near_depth, spec.size)[:, None]
    depth = np.broadcast_to(rows, (spec.size, spec.size)).copy()
    roi = spec.panel_roi()
    for region in (roi.black_region, roi.white_region):
        depth[region.slices()] = spec.panel_depth
    return DepthMap(depth)


def _rectangle(spec, position):
    side = max(spec.size // 4, 2)
    travel = spec.size - side
    x0 = int(round(travel * position / max(spec.frames - 1, 1)))
    y0 = spec.size - side - max(spec.size // 8, 1)
    return Rect(x0, y0, x0 + side, y0 + side)


def render_clear(spec, position, lighting, texture):
    """Clear frame at one robot position under one lighting condition."""
    pixels = texture.copy()
    pixels[_rectangle(spec, position).slices()] = (0.9, 0.1, 0.1)
    roi = spec.panel_roi()
    pixels[roi.black_region.slices()] = spec.panel_black
    pixels[roi.white_region.slices()] = spec.panel_white
    return Frame.clipped(pixels * lighting_gain(lighting, spec.size, spec.size))


def clear_scene(spec, lightings=None):
    """
    Render every clear sequence of the scene.

    Returns:
        tuple: (dict lighting -> FrameSequence, dict position -> DepthMap)
    """
    lightings = range(LIGHTING_CONDITIONS) if lightings is None else lightings
    rng = np.random.default_rng(spec.seed)
    texture = _texture(spec, rng)
    depth = depth_ramp(spec)
    depth_maps = {position: depth for position in range(spec.frames)}
    sequences = {}
    for lighting in lightings:
        items = [
            (render_clear(spec, position, lighting, texture), AcquisitionTag(position, lighting))
            for position in range(spec.frames)
        ]
        sequences[lighting] = FrameSequence(items, dict(depth_maps))
    logger.debug(f"Rendered {len(sequences)} clear sequence(s) of {spec.frames} frame(s)")
    return sequences, depth_maps
