"""
ADAM optimizer with bias correction.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from utils.errors import ContractError


logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First/second moment estimates and hyperparameters shared across steps."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """
    Apply one ADAM update in place.

    Args:
        params: dict name -> Tensor (updated in place)
        grads: dict name -> ndarray or None (None counts as a zero gradient)
        state: AdamState, mutated (t incremented, moments updated)

    Returns:
        tuple: (params, state)

    Raises:
        ContractError: if params and grads do not line up
    """
    if set(params) != set(grads):
        missing = sorted(set(params) ^ set(grads))
        raise ContractError(f"params and grads disagree on names: {missing}")

    state.t += 1
    bias1 = 1.0 - state.beta1 ** state.t
    bias2 = 1.0 - state.beta2 ** state.t

    for name, param in params.items():
        grad = grads[name]
        if grad is None:
            grad = np.zeros_like(param.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.size != param.data.size:
            raise ContractError(
                f"gradient for '{name}' has {grad.size} entries, parameter has {param.data.size}"
            )
        grad = grad.reshape(param.data.shape)

        if name not in state.m:
            state.m[name] = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
        m = state.m[name]
        v = state.v[name]
        if m.shape != param.data.shape:
            raise ContractError(f"moment shape for '{name}' does not match its parameter")

        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)

        m_hat = m / bias1
        v_hat = v / bias2
        param.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)

    return params, state
