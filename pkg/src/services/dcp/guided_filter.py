"""
Guided image filter with cumulative-sum box means.
"""

import numpy as np


def _box_sum_axis(x, radius, axis):
    size = x.shape[axis]
    cumulative = np.cumsum(x, axis=axis)
    zero_shape = list(x.shape)
    zero_shape[axis] = 1
    cumulative = np.concatenate([np.zeros(zero_shape), cumulative], axis=axis)
    index = np.arange(size)
    upper = np.minimum(index + radius + 1, size)
    lower = np.maximum(index - radius, 0)
    return np.take(cumulative, upper, axis=axis) - np.take(cumulative, lower, axis=axis)


def box_mean(x, radius):
    """Mean over the (2r+1) x (2r+1) window clipped to the image bounds."""
    x = np.asarray(x, dtype=np.float64)
    ones = np.ones(x.shape[:2])
    sums = _box_sum_axis(_box_sum_axis(x, radius, 0), radius, 1)
    counts = _box_sum_axis(_box_sum_axis(ones, radius, 0), radius, 1)
    if x.ndim == 3:
        counts = counts[:, :, None]
    return sums / counts


def guided_filter(guide, src, radius, eps):
    """
    Edge-preserving smoothing of src steered by a single-channel guide.

    Args:
        guide: H x W guidance image
        src: H x W image to filter
        radius: box radius
        eps: regularization; large eps tends to a double box mean of src

    Returns:
        ndarray: filtered H x W image
    """
    mean_i = box_mean(guide, radius)
    mean_p = box_mean(src, radius)
    cov_ip = box_mean(guide * src, radius) - mean_i * mean_p
    var_i = box_mean(guide * guide, radius) - mean_i * mean_i

    a = cov_ip / (var_i + eps)
    b = mean_p - a * mean_i

    return box_mean(a, radius) * guide + box_mean(b, radius)
