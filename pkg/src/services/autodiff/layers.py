"""
Parameter initializers and small composite layers.
"""

import math

import numpy as np

from services.autodiff import ops
from services.autodiff.tensor import Tensor


def he_uniform(rng, shape, fan_in, name=None):
    """He-uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in))."""
    limit = math.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True, name=name)


def xavier_uniform(rng, shape, fan_in, fan_out, name=None):
    """Xavier/Glorot-uniform init: U(-sqrt(6/(fan_in+fan_out)), +)."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True, name=name)


def zeros(shape, name=None):
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def ones(shape, name=None):
    return Tensor(np.ones(shape), requires_grad=True, name=name)


def linear(x, weight, bias=None):
    """x[..., Din] @ weight[Din, Dout] (+ bias[Dout])."""
    out = ops.matmul(x, weight)
    if bias is not None:
        out = ops.add(out, bias)
    return out


def conv_block(x, kernel, bias, stride=1, activation=True):
    """Same-padded conv2d plus bias, followed by ReLU unless disabled."""
    out = ops.add(ops.conv2d(x, kernel, stride=stride, padding='same'), bias)
    return ops.relu(out) if activation else out
