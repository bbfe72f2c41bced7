"""
Differentiable operations on Tensors.

Every op computes its forward result with numpy and, when an input lives on a
tape, records a backward rule returning one gradient per input. Image tensors
are laid out N,H,W,C; convolution kernels are kh,kw,Cin,Cout.
"""

import builtins

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from services.autodiff.tensor import as_tensor, make_result
from utils.errors import ContractError, ShapeError


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a, b, name):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'add')

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result('add', a.data + b.data, (a, b), backward_fn)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'sub')

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result('sub', a.data - b.data, (a, b), backward_fn)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'mul')

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result('mul', a.data * b.data, (a, b), backward_fn)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'div')
    out = a.data / b.data

    def backward_fn(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )

    return make_result('div', out, (a, b), backward_fn)


def neg(x):
    x = as_tensor(x)
    return make_result('neg', -x.data, (x,), lambda g: (-g,))


def square(x):
    x = as_tensor(x)
    return make_result('square', x.data * x.data, (x,), lambda g: (2.0 * x.data * g,))


def sqrt(x):
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return make_result('sqrt', out, (x,), lambda g: (0.5 * g / out,))


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return make_result('exp', out, (x,), lambda g: (g * out,))


def log(x):
    x = as_tensor(x)
    return make_result('log', np.log(x.data), (x,), lambda g: (g / x.data,))


def absolute(x):
    """Elementwise |x|; the subgradient at 0 is 0."""
    x = as_tensor(x)
    sign = np.sign(x.data)
    return make_result('abs', np.abs(x.data), (x,), lambda g: (g * sign,))


def relu(x):
    """Elementwise max(0, x); the subgradient at 0 is 0."""
    x = as_tensor(x)
    mask = x.data > 0
    return make_result('relu', np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x):
    x = as_tensor(x)
    out = expit(x.data)
    return make_result('sigmoid', out, (x,), lambda g: (g * out * (1.0 - out),))


# ---------------------------------------------------------------------------
# Reductions and shape plumbing
# ---------------------------------------------------------------------------

def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ContractError(f"axis {ax} out of range for {ndim}-D tensor")
        normalized.append(ax % ndim)
    return tuple(sorted(normalized))


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result('sum', np.asarray(out, dtype=np.float64), (x,), backward_fn)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    count = 1
    for ax in axes:
        count *= x.shape[ax]
    return mul(sum(x, axis=axes, keepdims=keepdims), 1.0 / count)


def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} into {tuple(shape)}") from None
    return make_result('reshape', out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result('transpose', x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def concat(tensors, axis=0):
    """
    Concatenate tensors along an axis.

    Args:
        tensors: list of Tensors whose non-axis dims agree
        axis: concatenation axis

    Returns:
        Tensor: axis dim equals the sum of the inputs' axis dims
    """
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    axis = _normalize_axes(axis, ndim)[0]
    reference = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            t.shape[d] != reference[d] for d in range(ndim) if d != axis
        ):
            raise ShapeError(f"concat along axis {axis}: {t.shape} does not match {reference}")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, offsets, axis=axis))

    return make_result('concat', np.concatenate([t.data for t in tensors], axis=axis), tensors, backward_fn)


def slice_axis(x, start, stop, axis):
    """Take x[start:stop] along one axis."""
    x = as_tensor(x)
    axis = _normalize_axes(axis, x.ndim)[0]
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward_fn(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return make_result('slice', x.data[index].copy(), (x,), backward_fn)


def split(x, sizes, axis=0):
    """Split x along an axis into pieces of the given sizes."""
    x = as_tensor(x)
    axis = _normalize_axes(axis, x.ndim)[0]
    if builtins.sum(sizes) != x.shape[axis]:
        raise ShapeError(f"split sizes {list(sizes)} do not add up to dim {x.shape[axis]}")
    pieces = []
    start = 0
    for size in sizes:
        pieces.append(slice_axis(x, start, start + size, axis))
        start += size
    return pieces


# ---------------------------------------------------------------------------
# Linear algebra, softmax, normalization
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Batched matrix product a[..., M, K] @ b[..., K, N] with broadcast batch dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs tensors with >= 2 dims, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims mismatch: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul batch dims do not broadcast: {a.shape} @ {b.shape}") from None

    def backward_fn(g):
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return make_result('matmul', np.matmul(a.data, b.data), (a, b), backward_fn)


def softmax(x, axis=-1):
    """Softmax along an axis, computed with max subtraction."""
    x = as_tensor(x)
    axis = _normalize_axes(axis, x.ndim)[0]
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result('softmax', out, (x,), backward_fn)


def layer_norm(x, gamma, beta, axis=-1, eps=1e-5):
    """
    Normalize x to zero mean and unit variance along an axis, then scale and shift.

    Args:
        x: input Tensor
        gamma: scale Tensor with shape (x.shape[axis],)
        beta: shift Tensor with shape (x.shape[axis],)
        axis: normalization axis
        eps: added to the variance

    Returns:
        Tensor: same shape as x
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axis = _normalize_axes(axis, x.ndim)[0]
    width = x.shape[axis]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise ShapeError(
            f"layer_norm affine params must have shape ({width},), got {gamma.shape} and {beta.shape}"
        )
    bshape = [1] * x.ndim
    bshape[axis] = width
    g_b = gamma.data.reshape(bshape)
    b_b = beta.data.reshape(bshape)

    mu = x.data.mean(axis=axis, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=axis, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * g_b + b_b
    other_axes = tuple(d for d in range(x.ndim) if d != axis)

    def backward_fn(g):
        dxhat = g * g_b
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=axis, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=axis, keepdims=True)
        )
        dgamma = (g * xhat).sum(axis=other_axes).reshape(width)
        dbeta = g.sum(axis=other_axes).reshape(width)
        return dx, dgamma, dbeta

    return make_result('layer_norm', out, (x, gamma, beta), backward_fn)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def _same_geometry(size, k, stride):
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, (total // 2, total - total // 2)


def _conv_geometry(x_shape, k_shape, stride, padding):
    _, height, width, _ = x_shape
    kh, kw = k_shape[0], k_shape[1]
    if padding == 'same':
        out_h, pad_h = _same_geometry(height, kh, stride)
        out_w, pad_w = _same_geometry(width, kw, stride)
    elif padding == 'valid':
        out_h = (height - kh) // stride + 1
        out_w = (width - kw) // stride + 1
        pad_h = pad_w = (0, 0)
        if out_h < 1 or out_w < 1:
            raise ShapeError(f"kernel {kh}x{kw} larger than input {height}x{width} with valid padding")
    else:
        raise ContractError(f"padding must be 'same' or 'valid', got {padding!r}")
    return out_h, out_w, pad_h, pad_w


def _im2col(x, kh, kw, stride, pad_h, pad_w, out_h, out_w):
    padded = np.pad(x, ((0, 0), pad_h, pad_w, (0, 0)))
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))
    windows = windows[:, :(out_h - 1) * stride + 1:stride, :(out_w - 1) * stride + 1:stride]
    n, channels = x.shape[0], x.shape[3]
    return windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * out_h * out_w, kh * kw * channels)


def _conv_forward(x, kernel, stride, pad_h, pad_w, out_h, out_w):
    kh, kw, cin, cout = kernel.shape
    cols = _im2col(x, kh, kw, stride, pad_h, pad_w, out_h, out_w)
    out = cols @ kernel.reshape(kh * kw * cin, cout)
    return out.reshape(x.shape[0], out_h, out_w, cout)


def _conv_input_grad(grad_out, kernel, x_shape, stride, pad_h, pad_w):
    kh, kw, cin, cout = kernel.shape
    n, height, width, _ = x_shape
    out_h, out_w = grad_out.shape[1], grad_out.shape[2]
    dcols = grad_out.reshape(-1, cout) @ kernel.reshape(kh * kw * cin, cout).T
    dcols = dcols.reshape(n, out_h, out_w, kh, kw, cin)
    padded = np.zeros((n, height + pad_h[0] + pad_h[1], width + pad_w[0] + pad_w[1], cin))
    for i in range(kh):
        for j in range(kw):
            padded[:, i:i + (out_h - 1) * stride + 1:stride, j:j + (out_w - 1) * stride + 1:stride, :] += dcols[:, :, :, i, j, :]
    return padded[:, pad_h[0]:pad_h[0] + height, pad_w[0]:pad_w[0] + width, :]


def _conv_kernel_grad(x, grad_out, kernel_shape, stride, pad_h, pad_w):
    kh, kw, cin, cout = kernel_shape
    out_h, out_w = grad_out.shape[1], grad_out.shape[2]
    cols = _im2col(x, kh, kw, stride, pad_h, pad_w, out_h, out_w)
    return (cols.T @ grad_out.reshape(-1, cout)).reshape(kernel_shape)


def _check_kernel(kernel, stride):
    if kernel.ndim != 4:
        raise ShapeError(f"kernel must be kh,kw,Cin,Cout, got shape {kernel.shape}")
    kh, kw = kernel.shape[0], kernel.shape[1]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"kernel spatial dims must be odd, got {kh}x{kw}")
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")


def conv2d(x, kernel, stride=1, padding='same'):
    """
    2-D convolution (cross-correlation) of N,H,W,Cin input with a kh,kw,Cin,Cout kernel.

    Output spatial size is ceil(H/stride) for same padding and
    (H-kh)//stride + 1 for valid padding.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be N,H,W,C, got shape {x.shape}")
    _check_kernel(kernel, stride)
    if kernel.shape[2] != x.shape[3]:
        raise ShapeError(
            f"conv2d channel mismatch: input has {x.shape[3]} channels, kernel expects {kernel.shape[2]}"
        )
    out_h, out_w, pad_h, pad_w = _conv_geometry(x.shape, kernel.shape, stride, padding)
    out = _conv_forward(x.data, kernel.data, stride, pad_h, pad_w, out_h, out_w)

    def backward_fn(g):
        grad_x = _conv_input_grad(g, kernel.data, x.shape, stride, pad_h, pad_w)
        grad_k = _conv_kernel_grad(x.data, g, kernel.shape, stride, pad_h, pad_w)
        return grad_x, grad_k

    return make_result('conv2d', out, (x, kernel), backward_fn)


def transposed_conv2d(x, kernel, stride=1):
    """
    Transposed convolution: the adjoint of a same-padded conv2d.

    The kernel is laid out kh,kw,Cout,Cin (the matching conv2d maps Cout
    channels to Cin). Spatial dims are multiplied by the stride.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4:
        raise ShapeError(f"transposed_conv2d input must be N,H,W,C, got shape {x.shape}")
    _check_kernel(kernel, stride)
    if kernel.shape[3] != x.shape[3]:
        raise ShapeError(
            f"transposed_conv2d channel mismatch: input has {x.shape[3]} channels, kernel expects {kernel.shape[3]}"
        )
    n, height, width, _ = x.shape
    out_shape = (n, height * stride, width * stride, kernel.shape[2])
    _, pad_h = _same_geometry(out_shape[1], kernel.shape[0], stride)
    _, pad_w = _same_geometry(out_shape[2], kernel.shape[1], stride)
    out = _conv_input_grad(x.data, kernel.data, out_shape, stride, pad_h, pad_w)

    def backward_fn(g):
        grad_x = _conv_forward(g, kernel.data, stride, pad_h, pad_w, height, width)
        grad_k = _conv_kernel_grad(g, x.data, kernel.shape, stride, pad_h, pad_w)
        return grad_x, grad_k

    return make_result('transposed_conv2d', out, (x, kernel), backward_fn)
