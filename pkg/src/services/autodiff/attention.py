"""
Multi-head attention over token sequences laid out [..., T, D].
"""

import math
from dataclasses import dataclass
from typing import Optional

from services.autodiff import ops
from services.autodiff.layers import linear
from services.autodiff.tensor import Tensor
from utils.errors import ConfigError, ShapeError


@dataclass
class AttentionWeights:
    """Projection parameters of one attention layer (all D x D, biases length D)."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    b_q: Optional[Tensor] = None
    b_k: Optional[Tensor] = None
    b_v: Optional[Tensor] = None
    b_o: Optional[Tensor] = None

    def tensors(self):
        return [t for t in (self.w_q, self.w_k, self.w_v, self.w_o,
                            self.b_q, self.b_k, self.b_v, self.b_o) if t is not None]


def _split_heads(x, heads):
    # [..., T, D] -> [..., heads, T, D/heads]
    *lead, tokens, dim = x.shape
    x = ops.reshape(x, (*lead, tokens, heads, dim // heads))
    n = len(lead)
    axes = list(range(n)) + [n + 1, n, n + 2]
    return ops.transpose(x, axes)


def _merge_heads(x):
    # [..., heads, T, dh] -> [..., T, heads*dh]
    *lead, heads, tokens, head_dim = x.shape
    n = len(lead)
    axes = list(range(n)) + [n + 1, n, n + 2]
    x = ops.transpose(x, axes)
    return ops.reshape(x, (*lead, tokens, heads * head_dim))


def multi_head_attention(q, k, v, heads, weights, return_attention=False):
    """
    Scaled dot-product attention computed in parallel over several heads.

    Per head h: softmax(Q_h K_h^T / sqrt(D/heads)) V_h. Heads are concatenated
    and projected with w_o.

    Args:
        q, k, v: Tensors shaped [..., T, D]
        heads: number of attention heads, must divide D
        weights: AttentionWeights
        return_attention: also return the attention matrix [..., heads, T, T]

    Returns:
        Tensor [..., T, D], or (output, attention) when return_attention is set

    Raises:
        ConfigError: if D is not divisible by heads
    """
    dim = q.shape[-1]
    if heads < 1 or dim % heads != 0:
        raise ConfigError(f"model dim {dim} is not divisible by {heads} heads")
    if k.shape != v.shape or k.shape[-1] != dim:
        raise ShapeError(f"attention shapes disagree: q {q.shape}, k {k.shape}, v {v.shape}")

    query = _split_heads(linear(q, weights.w_q, weights.b_q), heads)
    key = _split_heads(linear(k, weights.w_k, weights.b_k), heads)
    value = _split_heads(linear(v, weights.w_v, weights.b_v), heads)

    key_t = ops.transpose(key, list(range(key.ndim - 2)) + [key.ndim - 1, key.ndim - 2])
    scores = ops.mul(ops.matmul(query, key_t), 1.0 / math.sqrt(dim // heads))
    attention = ops.softmax(scores, axis=-1)
    context = _merge_heads(ops.matmul(attention, value))
    out = linear(context, weights.w_o, weights.b_o)
    if return_attention:
        return out, attention
    return out
