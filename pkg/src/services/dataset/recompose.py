"""
Stop-motion recomposition: regroup per-position slices into constant-condition videos.
"""

import logging
from collections import defaultdict

from services.dataset.frames import FrameSequence, density_label
from utils.errors import AmbiguityError


logger = logging.getLogger(__name__)


def recompose(slices, depth_maps=None):
    """
    Group tagged frames into one video per (lighting, density), ordered by position.

    Args:
        slices: iterable of (Frame, AcquisitionTag)
        depth_maps: optional dict position -> DepthMap shared by all outputs

    Returns:
        dict: (lighting, density) -> FrameSequence

    Raises:
        AmbiguityError: if a (position, lighting, density) appears twice
    """
    groups = defaultdict(list)
    seen = set()
    positions = set()
    for frame, tag in slices:
        key = (tag.position, tag.lighting, tag.density)
        if key in seen:
            raise AmbiguityError(
                f"duplicate slice for position {tag.position}, lighting {tag.lighting}, "
                f"density {density_label(tag.density)}"
            )
        seen.add(key)
        positions.add(tag.position)
        groups[tag.condition].append((frame, tag))

    videos = {}
    for condition in sorted(groups, key=_condition_key):
        items = sorted(groups[condition], key=lambda item: item[1].position)
        present = {tag.position for _, tag in items}
        gaps = sorted(positions - present)
        if gaps:
            lighting, density = condition
            logger.warning(
                f"Video light_{lighting}/density_{density_label(density)} is missing positions {gaps}"
            )
        maps = {}
        if depth_maps:
            maps = {pos: depth_maps[pos] for pos in sorted(present) if pos in depth_maps}
        videos[condition] = FrameSequence(items, maps)

    logger.info(f"Recomposed {len(seen)} slice(s) into {len(videos)} video(s)")
    return videos


def scatter(videos):
    """Inverse of recompose: flatten videos back into tagged slices."""
    slices = []
    for condition in sorted(videos, key=_condition_key):
        slices.extend(videos[condition].items)
    return slices


def _condition_key(condition):
    lighting, density = condition
    return lighting, -1.0 if density is None else density


def triplets(seq):
    """
    Yield (prev, center, next) for every frame, replicating edge frames.

    A length-n sequence yields exactly n triplets; an empty one yields none.
    """
    frames = seq.frames if isinstance(seq, FrameSequence) else list(seq)
    count = len(frames)
    for index in range(count):
        yield (
            frames[max(index - 1, 0)],
            frames[index],
            frames[min(index + 1, count - 1)],
        )
