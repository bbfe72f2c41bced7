"""
Training samples: foggy frame triplets paired with the clear center frame.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

from services.dataset.frames import Frame
from services.dataset.loader import discover_dataset
from services.dataset.recompose import triplets
from services.dataset.transforms import resize
from utils.errors import DataLoadError


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingSample:
    """One (prev, center, next) foggy triplet and its clear center frame."""

    foggy: Tuple[Frame, Frame, Frame]
    clear: Frame
    root_index: int = 0


def samples_from_sequences(foggy_seq, clear_seq, input_size, root_index=0):
    """
    Pair each foggy triplet with the clear frame at the same position.

    Frames are resized to input_size x input_size.
    """
    clear_by_position = {tag.position: frame for frame, tag in clear_seq.items}
    foggy_frames = [resize(frame, input_size) for frame in foggy_seq.frames]
    samples = []
    for (prev, center, nxt), tag in zip(triplets(foggy_frames), foggy_seq.tags):
        target = clear_by_position.get(tag.position)
        if target is None:
            logger.warning(f"No clear frame for position {tag.position}; sample skipped")
            continue
        samples.append(TrainingSample((prev, center, nxt), resize(target, input_size), root_index))
    return samples


def build_training_set(roots, input_size):
    """
    Collect samples from one or several dataset roots.

    Args:
        roots: list of dataset root paths
        input_size: network input side length

    Returns:
        list: per-root lists of TrainingSample

    Raises:
        DataLoadError: if a root yields no sample at all
    """
    per_root = []
    for root_index, root in enumerate(roots):
        index = discover_dataset(root)
        samples = []
        for (lighting, density), foggy_seq in sorted(
            index.foggy.items(), key=lambda item: (item[0][0], item[0][1])
        ):
            clear_seq = index.clear.get(lighting)
            if clear_seq is None:
                logger.warning(f"{root}: no clear sequence for lighting {lighting}")
                continue
            samples.extend(samples_from_sequences(foggy_seq, clear_seq, input_size, root_index))
        if not samples:
            raise DataLoadError(f"no training samples under {root}", failures=[(str(root), 'empty')])
        logger.info(f"Root {root}: {len(samples)} training sample(s)")
        per_root.append(samples)
    return per_root
