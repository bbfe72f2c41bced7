"""
Tensor and tape for reverse-mode automatic differentiation.

A Tape is created explicitly for each forward pass. Leaves join a tape through
Tape.watch(); every op whose inputs live on a tape records itself there. Ops on
tensors that are not on any tape run forward only.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from utils.errors import ContractError, ShapeError


logger = logging.getLogger(__name__)

# Set FOGBENCH_DEBUG_FINITE=1 to check every op output for NaN/Inf.
DEBUG_FINITE = os.getenv('FOGBENCH_DEBUG_FINITE', '0') == '1'


class Tensor:
    """N-D float64 array that can take part in a differentiation tape."""

    __slots__ = ('data', 'requires_grad', 'grad', 'node_id', 'tape', 'name')

    def __init__(self, data, requires_grad=False, name=None):
        """
        Initialize a tensor.

        Args:
            data: array-like of real numbers, copied to float64
            requires_grad: whether backward() should populate .grad
            name: optional label used in diagnostics
        """
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.node_id = None
        self.tape = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self):
        """Return a read-only view of the data."""
        view = self.data.view()
        view.flags.writeable = False
        return view

    def detach(self):
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # Operator sugar; the real work lives in ops.py.
    def __add__(self, other):
        from services.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from services.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from services.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from services.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from services.autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from services.autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from services.autodiff import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from services.autodiff import ops
        return ops.div(other, self)

    def __neg__(self):
        from services.autodiff import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from services.autodiff import ops
        return ops.matmul(self, other)


def as_tensor(value):
    """Wrap constants so ops can treat every operand as a Tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass
class Operation:
    """One recorded op: which nodes went in, which came out, and how to go back."""

    name: str
    input_ids: List[Optional[int]]
    output_id: int
    backward_fn: Callable
    output: Tensor


@dataclass
class Tape:
    """Ordered record of operations for a single forward/backward pass."""

    operations: List[Operation] = field(default_factory=list)
    watched: dict = field(default_factory=dict)
    _next_id: int = 0
    consumed: bool = False

    def _new_id(self):
        node_id = self._next_id
        self._next_id += 1
        return node_id

    def watch(self, tensor):
        """
        Register a leaf tensor so its gradient is populated by backward().

        Args:
            tensor: Tensor to track

        Returns:
            Tensor: the same tensor, now bound to this tape
        """
        if self.consumed:
            raise ContractError("tape has already been consumed by backward()")
        if tensor.tape is self and tensor.node_id in self.watched:
            return tensor
        tensor.tape = self
        tensor.node_id = self._new_id()
        tensor.grad = None
        self.watched[tensor.node_id] = tensor
        return tensor

    def watch_all(self, tensors):
        for tensor in tensors:
            self.watch(tensor)
        return tensors

    def record(self, name, inputs, output, backward_fn):
        """Append an op whose output depends on the given inputs."""
        if self.consumed:
            raise ContractError("tape has already been consumed by backward()")
        output.tape = self
        output.node_id = self._new_id()
        input_ids = [t.node_id if t.tape is self else None for t in inputs]
        self.operations.append(Operation(name, input_ids, output.node_id, backward_fn, output))
        return output

    def first_nonfinite(self):
        """
        Find the earliest recorded op whose output holds NaN or Inf.

        Returns:
            tuple: (index, op name) or None when every output is finite
        """
        for index, op in enumerate(self.operations):
            if not np.all(np.isfinite(op.output.data)):
                return index, op.name
        return None

    def reset(self):
        for tensor in self.watched.values():
            tensor.tape = None
            tensor.node_id = None
        for op in self.operations:
            op.output.tape = None
        self.operations = []
        self.watched = {}
        self.consumed = True

    def __len__(self):
        return len(self.operations)


def tape_of(tensors: Sequence[Tensor]):
    """Return the single tape shared by the inputs, or None if none is taped."""
    found = None
    for tensor in tensors:
        if tensor.tape is None:
            continue
        if found is None:
            found = tensor.tape
        elif tensor.tape is not found:
            raise ContractError("op inputs belong to different tapes")
    return found


def make_result(name, data, inputs, backward_fn):
    """
    Build an op output and record it on the inputs' tape (if any).

    Args:
        name: op name used in diagnostics
        data: forward result as an ndarray
        inputs: input tensors
        backward_fn: callable(grad_out) -> tuple of grads, one per input (None allowed)

    Returns:
        Tensor: the output tensor
    """
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.node_id = None
    out.tape = None
    out.name = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    if DEBUG_FINITE and not np.all(np.isfinite(data)):
        logger.warning(f"Non-finite output from op '{name}'")
    tape = tape_of(inputs)
    if tape is not None:
        tape.record(name, inputs, out, backward_fn)
    return out


def backward(loss):
    """
    Run reverse-mode differentiation from a scalar loss.

    Populates .grad on every watched tensor with requires_grad and consumes the
    tape.

    Args:
        loss: scalar Tensor produced on a tape

    Raises:
        ContractError: if the loss is not a scalar or is not on a tape
    """
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    tape = loss.tape
    if tape is None:
        raise ContractError("loss is not attached to a tape")

    grads = {loss.node_id: np.ones_like(loss.data)}
    for op in reversed(tape.operations):
        grad_out = grads.pop(op.output_id, None)
        if grad_out is None:
            continue
        input_grads = op.backward_fn(grad_out)
        for node_id, grad in zip(op.input_ids, input_grads):
            if node_id is None or grad is None:
                continue
            if node_id in grads:
                grads[node_id] = grads[node_id] + grad
            else:
                grads[node_id] = grad

    for node_id, tensor in tape.watched.items():
        if not tensor.requires_grad:
            continue
        grad = grads.get(node_id)
        if grad is None:
            grad = np.zeros_like(tensor.data)
        if grad.shape != tensor.data.shape:
            raise ShapeError(
                f"gradient shape {grad.shape} does not match tensor shape {tensor.data.shape}"
            )
        tensor.grad = grad

    tape.reset()
