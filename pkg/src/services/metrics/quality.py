"""
Full-reference quality measures: SSIM, PSNR, flicker and per-channel mean error.
"""

import math

import numpy as np
from scipy.signal import convolve2d

from services.dataset.frames import Frame, FrameSequence
from utils.errors import ContractError, ShapeError


WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
DYNAMIC_RANGE = 1.0
C1 = (0.01 * DYNAMIC_RANGE) ** 2
C2 = (0.03 * DYNAMIC_RANGE) ** 2


def gaussian_window(size=WINDOW_SIZE, sigma=WINDOW_SIGMA):
    """Normalized size x size Gaussian weights."""
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def window_size_for(height, width):
    """11, or the largest odd side that fits a smaller image."""
    side = min(WINDOW_SIZE, height, width)
    return side if side % 2 == 1 else side - 1


def _pixels(image):
    if isinstance(image, Frame):
        return image.pixels
    return np.asarray(image, dtype=np.float64)


def _check_pair(x, y):
    x, y = _pixels(x), _pixels(y)
    if x.shape != y.shape:
        raise ShapeError(f"images differ in shape: {x.shape} vs {y.shape}")
    return x, y


def ssim_map(x, y, window):
    """SSIM at every valid window position of two single-channel images."""
    mu_x = convolve2d(x, window, mode='valid')
    mu_y = convolve2d(y, window, mode='valid')
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    sigma_xx = convolve2d(x * x, window, mode='valid') - mu_xx
    sigma_yy = convolve2d(y * y, window, mode='valid') - mu_yy
    sigma_xy = convolve2d(x * y, window, mode='valid') - mu_xy
    numerator = (2.0 * mu_xy + C1) * (2.0 * sigma_xy + C2)
    denominator = (mu_xx + mu_yy + C1) * (sigma_xx + sigma_yy + C2)
    return numerator / denominator


def ssim(x, y):
    """
    Structural similarity of two RGB images with values in [0, 1].

    Gaussian window (11 x 11, sigma 1.5), valid positions only, averaged over
    positions and then over the three channels.

    Args:
        x: Frame or H x W x 3 array
        y: Frame or H x W x 3 array

    Returns:
        float

    Raises:
        ShapeError: if the shapes differ
    """
    x, y = _check_pair(x, y)
    if x.ndim == 2:
        x, y = x[:, :, None], y[:, :, None]
    window = gaussian_window(window_size_for(x.shape[0], x.shape[1]))
    scores = [ssim_map(x[:, :, c], y[:, :, c], window).mean() for c in range(x.shape[2])]
    return float(np.mean(scores))


def mean_squared_error(x, y):
    x, y = _check_pair(x, y)
    return float(np.mean((x - y) ** 2))


def psnr_from_mse(mse, peak=1.0):
    """10 log10(peak^2 / mse), math.inf when mse is 0."""
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def psnr(x, y, peak=1.0):
    """
    Peak signal-to-noise ratio in dB.

    Returns math.inf when the images are identical.
    """
    return psnr_from_mse(mean_squared_error(x, y), peak)


def _stack(seq):
    if isinstance(seq, FrameSequence):
        return seq.as_array()
    return np.stack([_pixels(frame) for frame in seq])


def flicker(seq, ref):
    """
    Excess inter-frame variation of seq over ref.

    Mean over t of | mean|seq[t+1] - seq[t]| - mean|ref[t+1] - ref[t]| |.

    Raises:
        ContractError: if the lengths differ or are below 2
    """
    restored, reference = _stack(seq), _stack(ref)
    if len(restored) != len(reference):
        raise ContractError(f"flicker needs equal lengths, got {len(restored)} and {len(reference)}")
    if len(restored) < 2:
        raise ContractError("flicker needs at least two frames")
    if restored.shape != reference.shape:
        raise ShapeError(f"sequence frames differ in shape: {restored.shape} vs {reference.shape}")
    axes = tuple(range(1, restored.ndim))
    seq_steps = np.abs(np.diff(restored, axis=0)).mean(axis=axes)
    ref_steps = np.abs(np.diff(reference, axis=0)).mean(axis=axes)
    return float(np.mean(np.abs(seq_steps - ref_steps)))


def channel_mean_error(seq, ref):
    """Signed mean error per RGB channel (a color-shift diagnostic)."""
    restored, reference = _stack(seq), _stack(ref)
    if restored.shape != reference.shape:
        raise ShapeError(f"sequences differ in shape: {restored.shape} vs {reference.shape}")
    diff = (restored - reference).reshape(-1, restored.shape[-1])
    return tuple(float(v) for v in diff.mean(axis=0))
