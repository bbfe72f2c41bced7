"""
Homogeneous fog synthesis with the atmospheric scattering model I = J*t + A*(1 - t).
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from services.dataset.frames import Frame
from utils.errors import ContractError, ShapeError


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FogParams:
    """Extinction coefficient beta (1/cm) and RGB airlight."""

    beta: float
    airlight: Tuple[float, float, float] = (0.5, 0.5, 0.5)

    def __post_init__(self):
        if self.beta < 0:
            raise ContractError(f"beta must be >= 0, got {self.beta}")
        airlight = tuple(float(a) for a in self.airlight)
        if len(airlight) != 3 or any(a < 0.0 or a > 1.0 for a in airlight):
            raise ContractError(f"airlight must be three values in [0, 1], got {self.airlight}")
        object.__setattr__(self, 'airlight', airlight)


def transmission(depth, beta):
    """
    Transmission t = exp(-beta * depth); pixels with invalid depth get t = 1.

    Args:
        depth: DepthMap (centimeters)
        beta: extinction coefficient in 1/cm

    Returns:
        ndarray: H x W map in (0, 1]
    """
    if beta < 0:
        raise ContractError(f"beta must be >= 0, got {beta}")
    t = np.exp(-beta * np.where(depth.valid_mask, depth.depth, 0.0))
    return np.where(depth.valid_mask, t, 1.0)


def apply_fog(clear, depth, params):
    """
    Add homogeneous fog to a clear frame.

    Args:
        clear: Frame (scene radiance J)
        depth: DepthMap matching the frame size
        params: FogParams

    Returns:
        Frame: J*t + A*(1 - t), clamped to [0, 1]
    """
    if clear.size != depth.size:
        raise ShapeError(f"frame {clear.size} and depth map {depth.size} differ in size")
    t = transmission(depth, params.beta)[:, :, None]
    airlight = np.asarray(params.airlight)[None, None, :]
    return Frame.clipped(clear.pixels * t + airlight * (1.0 - t))
