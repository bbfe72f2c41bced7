"""
Training loss: a * (1 - SSIM) + b * mean absolute error.
"""

from services.autodiff import ops
from services.autodiff.tensor import Tensor, as_tensor
from services.metrics.quality import C1, C2, gaussian_window, window_size_for
from utils.errors import ContractError, ShapeError


def _fold_channels(x):
    # B,H,W,C -> B*C,H,W,1 so one single-channel window serves every channel
    batch, height, width, channels = x.shape
    x = ops.transpose(x, (0, 3, 1, 2))
    return ops.reshape(x, (batch * channels, height, width, 1))


def ssim_tensor(pred, gt):
    """
    Differentiable SSIM of two B x H x W x C tensors.

    Same window, constants and valid-position averaging as metrics.quality.ssim;
    the result is the mean over batch items and channels.
    """
    pred, gt = as_tensor(pred), as_tensor(gt)
    if pred.shape != gt.shape or pred.ndim != 4:
        raise ShapeError(f"ssim needs two equal B,H,W,C tensors, got {pred.shape} and {gt.shape}")
    side = window_size_for(pred.shape[1], pred.shape[2])
    window = Tensor(gaussian_window(side).reshape(side, side, 1, 1))

    x = _fold_channels(pred)
    y = _fold_channels(gt)

    def blur(t):
        return ops.conv2d(t, window, padding='valid')

    mu_x = blur(x)
    mu_y = blur(y)
    mu_xx = ops.mul(mu_x, mu_x)
    mu_yy = ops.mul(mu_y, mu_y)
    mu_xy = ops.mul(mu_x, mu_y)
    sigma_xx = ops.sub(blur(ops.mul(x, x)), mu_xx)
    sigma_yy = ops.sub(blur(ops.mul(y, y)), mu_yy)
    sigma_xy = ops.sub(blur(ops.mul(x, y)), mu_xy)

    numerator = ops.mul(ops.add(ops.mul(mu_xy, 2.0), C1), ops.add(ops.mul(sigma_xy, 2.0), C2))
    denominator = ops.mul(ops.add(ops.add(mu_xx, mu_yy), C1), ops.add(ops.add(sigma_xx, sigma_yy), C2))
    return ops.mean(ops.div(numerator, denominator))


def tcvd_loss(pred, gt, a=1.0, b=1.0):
    """
    L = a * (1 - SSIM(pred, gt)) + b * mean|pred - gt|.

    Args:
        pred: B x H x W x 3 Tensor (network output)
        gt: B x H x W x 3 Tensor or array (clear center frames)
        a: SSIM term weight (>= 0)
        b: L1 term weight (>= 0)

    Returns:
        scalar Tensor

    Raises:
        ShapeError: if the shapes differ
    """
    if a < 0 or b < 0:
        raise ContractError(f"loss weights must be >= 0, got a={a}, b={b}")
    pred, gt = as_tensor(pred), as_tensor(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    ssim_term = ops.sub(1.0, ssim_tensor(pred, gt))
    l1_term = ops.mean(ops.absolute(ops.sub(pred, gt)))
    return ops.add(ops.mul(ssim_term, a), ops.mul(l1_term, b))
