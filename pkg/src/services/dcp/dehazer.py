"""
Dark-channel-prior defogging, applied frame by frame.
"""

import logging
import math
from dataclasses import asdict, dataclass

import cv2
import numpy as np

from services.dataset.frames import Frame
from services.dcp.guided_filter import guided_filter
from services.fog.panel import luminance
from utils.errors import ContractError, FogbenchError, ShapeError


logger = logging.getLogger(__name__)

AIRLIGHT_FLOOR = 0.05


@dataclass(frozen=True)
class DcpParams:
    """Canonical dark-channel-prior settings."""

    omega: float = 0.95
    patch: int = 15
    t0: float = 0.1
    top_fraction: float = 0.001
    guided_radius: int = 15
    guided_eps: float = 1e-3

    def as_dict(self):
        return asdict(self)


def dark_channel_array(pixels, patch):
    """Min over an edge-replicated patch x patch window of the per-pixel channel minimum."""
    if patch < 1 or patch % 2 == 0:
        raise ContractError(f"dark channel patch must be an odd integer >= 1, got {patch}")
    channel_min = np.ascontiguousarray(np.asarray(pixels, dtype=np.float64).min(axis=2))
    if patch == 1:
        return channel_min
    kernel = cv2.getStructuringElement(cv2.MORPH_RECT, (patch, patch))
    return cv2.erode(channel_min, kernel, borderType=cv2.BORDER_REPLICATE)


def dark_channel(frame, patch=15):
    """
    Dark channel of a frame.

    Args:
        frame: Frame
        patch: odd window side

    Returns:
        ndarray: H x W map
    """
    return dark_channel_array(frame.pixels, patch)


def estimate_airlight(frame, dark, top_fraction=0.001):
    """
    Pick the airlight among the brightest dark-channel pixels.

    Among the ceil(top_fraction * H * W) pixels with the highest dark channel,
    the one with the highest luminance wins. Channels are floored at 0.05.

    Returns:
        tuple: RGB airlight
    """
    if not 0 < top_fraction <= 1:
        raise ContractError(f"top_fraction must be in (0, 1], got {top_fraction}")
    if dark.shape != frame.size:
        raise ShapeError(f"dark channel {dark.shape} does not match frame {frame.size}")
    count = max(1, math.ceil(top_fraction * dark.size))
    order = np.argsort(-dark.ravel(), kind='stable')[:count]
    flat = frame.pixels.reshape(-1, 3)
    best = order[int(np.argmax(luminance(flat[order])))]
    airlight = np.maximum(flat[best], AIRLIGHT_FLOOR)
    return tuple(float(a) for a in airlight)


def _check_airlight(airlight):
    airlight = np.asarray(airlight, dtype=np.float64)
    if airlight.shape != (3,) or np.any(airlight <= 0):
        raise ContractError(f"airlight channels must be > 0, got {airlight.tolist()}")
    return airlight


def estimate_transmission(frame, airlight, omega=0.95, patch=15, t0=0.1):
    """
    t = 1 - omega * dark_channel(I / A), clamped to [t0, 1].
    """
    airlight = _check_airlight(airlight)
    normalized = frame.pixels / airlight[None, None, :]
    t = 1.0 - omega * dark_channel_array(normalized, patch)
    return np.clip(t, t0, 1.0)


def refine_transmission(t, guide, radius=15, eps=1e-3, t0=0.1):
    """Guided-filter smoothing of t using the guide frame's luminance, clamped to [t0, 1]."""
    if t.shape != guide.size:
        raise ShapeError(f"transmission {t.shape} does not match guide {guide.size}")
    refined = guided_filter(luminance(guide.pixels), t, radius, eps)
    return np.clip(refined, t0, 1.0)


def recover(frame, t, airlight, t0=0.1):
    """Scene radiance J = (I - A) / max(t, t0) + A, clamped to [0, 1]."""
    if t.shape != frame.size:
        raise ShapeError(f"transmission {t.shape} does not match frame {frame.size}")
    airlight = _check_airlight(airlight)[None, None, :]
    denom = np.maximum(t, t0)[:, :, None]
    return Frame.clipped((frame.pixels - airlight) / denom + airlight)


def dcp_defog_frame(frame, params=None):
    """Run dark channel -> airlight -> transmission -> refinement -> recovery on one frame."""
    params = params or DcpParams()
    dark = dark_channel(frame, params.patch)
    airlight = estimate_airlight(frame, dark, params.top_fraction)
    t = estimate_transmission(frame, airlight, params.omega, params.patch, params.t0)
    t = refine_transmission(t, frame, params.guided_radius, params.guided_eps, params.t0)
    return recover(frame, t, airlight, params.t0)


def dcp_defog_video(seq, params=None):
    """
    Defog every frame of a sequence independently.

    Raises:
        FogbenchError: the first per-frame failure, prefixed with its frame index
    """
    params = params or DcpParams()
    restored = []
    for index, frame in enumerate(seq.frames):
        try:
            restored.append(dcp_defog_frame(frame, params))
        except FogbenchError as e:
            raise e.__class__(f"frame {index}: {e}") from e
    logger.debug(f"DCP restored {len(restored)} frame(s)")
    return seq.with_frames(restored)
