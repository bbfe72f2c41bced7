"""
Fog density measurement on a black & white contrast panel, and calibration of beta.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from services.fog.scattering import FogParams, apply_fog
from utils.errors import ContractError, InfeasibleTargetError


logger = logging.getLogger(__name__)

LUMA = np.array([0.2126, 0.7152, 0.0722])

DENSE_ANCHOR = 0.015
MEDIUM_ANCHOR = 0.05
LIGHT_ANCHOR = 0.15
DENSE_MEDIUM_BOUNDARY = math.sqrt(DENSE_ANCHOR * MEDIUM_ANCHOR)
MEDIUM_LIGHT_BOUNDARY = math.sqrt(MEDIUM_ANCHOR * LIGHT_ANCHOR)
CLEAR_THRESHOLD = 0.30
# how closely synthesized panel contrasts must match their anchor
CALIBRATION_TOLERANCE = 1e-6


class DensityClass(str, Enum):
    DENSE = 'dense'
    MEDIUM = 'medium'
    LIGHT = 'light'
    CLEAR = 'clear'


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def empty(self):
        return self.x1 <= self.x0 or self.y1 <= self.y0

    def overlaps(self, other):
        return not (
            self.x1 <= other.x0 or other.x1 <= self.x0 or self.y1 <= other.y0 or other.y1 <= self.y0
        )

    def inside(self, height, width):
        return 0 <= self.x0 and 0 <= self.y0 and self.x1 <= width and self.y1 <= height

    def slices(self):
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    @classmethod
    def parse(cls, text):
        values = [int(v) for v in str(text).replace(' ', '').split(',')]
        if len(values) != 4:
            raise ContractError(f"rectangle needs four integers x0,y0,x1,y1, got {text!r}")
        return cls(*values)

    def __str__(self):
        return f"{self.x0},{self.y0},{self.x1},{self.y1}"


@dataclass(frozen=True)
class PanelROI:
    """The black and white patches of the contrast panel."""

    black_region: Rect
    white_region: Rect

    def validate(self, height, width):
        for name, region in (('black', self.black_region), ('white', self.white_region)):
            if region.empty:
                raise ContractError(f"{name} panel region {region} is empty")
            if not region.inside(height, width):
                raise ContractError(f"{name} panel region {region} lies outside a {width}x{height} frame")
        if self.black_region.overlaps(self.white_region):
            raise ContractError("black and white panel regions overlap")


def luminance(pixels):
    """Rec. 709 luminance of an ... x 3 array."""
    return np.asarray(pixels) @ LUMA


def panel_luminances(frame, roi):
    """Mean luminance over the white and black regions."""
    roi.validate(frame.height, frame.width)
    lum = luminance(frame.pixels)
    white = float(lum[roi.white_region.slices()].mean())
    black = float(lum[roi.black_region.slices()].mean())
    return white, black


def panel_contrast(frame, roi):
    """
    Michelson contrast (L_w - L_b) / (L_w + L_b) of the panel's mean luminances.

    Returns 0 when both luminances are 0.
    """
    white, black = panel_luminances(frame, roi)
    total = white + black
    if total == 0:
        return 0.0
    return (white - black) / total


def panel_airlight(frame, roi):
    """Gray airlight equal to the panel's mean luminance (makes contrast scale exactly by t)."""
    white, black = panel_luminances(frame, roi)
    level = 0.5 * (white + black)
    return level, level, level


def density_class(contrast):
    """
    Classify a contrast against the 0.015 / 0.05 / 0.15 anchors.

    Boundaries sit at the geometric means of neighbouring anchors; contrasts
    above 0.30 count as clear.
    """
    if contrast > CLEAR_THRESHOLD:
        return DensityClass.CLEAR
    if contrast >= MEDIUM_LIGHT_BOUNDARY:
        return DensityClass.LIGHT
    if contrast >= DENSE_MEDIUM_BOUNDARY:
        return DensityClass.MEDIUM
    return DensityClass.DENSE


def beta_for_contrast(panel_depth, clear_contrast, target):
    """
    Extinction coefficient that brings the panel contrast from clear_contrast to target.

    Valid when the airlight equals the panel mean luminance and the panel sits at
    a single depth, where the fogged contrast is exp(-beta * depth) * clear contrast.

    Args:
        panel_depth: panel distance in cm (> 0)
        clear_contrast: contrast measured without fog
        target: desired contrast, 0 < target <= clear_contrast

    Returns:
        float: beta in 1/cm

    Raises:
        InfeasibleTargetError: if the target exceeds the clear contrast or is not positive
    """
    if panel_depth <= 0:
        raise ContractError(f"panel depth must be > 0, got {panel_depth}")
    if target <= 0:
        raise InfeasibleTargetError(f"target contrast must be > 0, got {target}")
    if target > clear_contrast:
        raise InfeasibleTargetError(
            f"target contrast {target} exceeds the clear panel contrast {clear_contrast}; fog only lowers contrast"
        )
    return math.log(clear_contrast / target) / panel_depth


def solve_beta(clear, depth, roi, airlight, target, tolerance=1e-14):
    """
    Find beta numerically for an arbitrary (possibly colored) airlight.

    The fogged panel contrast is decreasing in beta, so the root is bracketed
    by doubling an upper bound and refined with Brent's method.

    Returns:
        float: beta in 1/cm
    """
    clear_contrast = panel_contrast(clear, roi)
    if target <= 0 or target > clear_contrast:
        raise InfeasibleTargetError(
            f"target contrast {target} is outside (0, {clear_contrast}] for this panel"
        )
    if target == clear_contrast:
        return 0.0

    def residual(beta):
        return panel_contrast(apply_fog(clear, depth, FogParams(beta, airlight)), roi) - target

    upper = 1e-3
    while residual(upper) > 0:
        upper *= 2.0
        if upper > 1e3:
            raise InfeasibleTargetError(f"no beta below 1e3 reaches contrast {target}")
    beta = brentq(residual, 0.0, upper, xtol=tolerance)
    logger.debug(f"Solved beta={beta:.6g} for target contrast {target}")
    return beta
