"""
Whole-video restoration with a trained TCVD model.
"""

import logging

from services.dataset.frames import Frame
from services.dataset.recompose import triplets
from services.dataset.transforms import resize, resize_array
from services.tcvd.model import triplet_array


logger = logging.getLogger(__name__)


def infer_video(model, seq, restore_size=True):
    """
    Restore every frame from its (prev, center, next) triplet.

    Boundary frames reuse themselves as the missing neighbour. Frames are
    resized to the model's input size; with restore_size the outputs are
    resized back to the sequence's frame size.

    Args:
        model: TcvdModel
        seq: FrameSequence
        restore_size: resize outputs back to the input frame size

    Returns:
        FrameSequence with the same tags, one restored frame per input frame
    """
    size = model.config.input_size
    resized = [resize(frame, size) for frame in seq.frames]
    restored = []
    for index, triplet in enumerate(triplets(resized)):
        out = model.forward(triplet_array(triplet)).data[0]
        if restore_size and seq.frames[index].size != (size, size):
            height, width = seq.frames[index].size
            out = resize_array(out, height, width)
        restored.append(Frame.clipped(out))
        logger.debug(f"Restored frame {index + 1}/{len(seq)}")
    return seq.with_frames(restored)
