"""
Finite-difference gradient checking and dot-product adjoint tests.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from services.autodiff import ops
from services.autodiff.tensor import Tape, Tensor, backward


logger = logging.getLogger(__name__)


@dataclass
class GradCheckReport:
    """Worst relative error per input plus the overall maximum."""

    max_rel_error: float = 0.0
    per_input: dict = field(default_factory=dict)
    checked: int = 0

    def passed(self, tolerance):
        return self.max_rel_error <= tolerance


def _evaluate(fn, inputs):
    out = fn(*inputs)
    return float(out.data.reshape(()))


def relative_error(analytic, numeric, floor=1e-6):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(fn, inputs, eps=1e-6, samples=None, rng=None, floor=1e-6):
    """
    Compare reverse-mode gradients with central finite differences.

    Args:
        fn: callable(*inputs) -> scalar Tensor, built only from autodiff ops
        inputs: list of Tensors; those with requires_grad are checked
        eps: finite-difference step
        samples: check at most this many entries per input (all when None)
        rng: numpy Generator used to pick sampled entries
        floor: denominator floor for the relative error

    Returns:
        GradCheckReport
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    tape = Tape()
    tape.watch_all([t for t in inputs if t.requires_grad])
    backward(fn(*inputs))
    analytic = {id(t): t.grad.copy() for t in inputs if t.requires_grad}

    report = GradCheckReport()
    for position, tensor in enumerate(inputs):
        if not tensor.requires_grad:
            continue
        flat = tensor.data.reshape(-1)
        indices = np.arange(flat.size)
        if samples is not None and flat.size > samples:
            indices = np.sort(rng.choice(flat.size, size=samples, replace=False))
        worst = 0.0
        grad = analytic[id(tensor)].reshape(-1)
        for index in indices:
            original = flat[index]
            flat[index] = original + eps
            plus = _evaluate(fn, inputs)
            flat[index] = original - eps
            minus = _evaluate(fn, inputs)
            flat[index] = original
            numeric = (plus - minus) / (2.0 * eps)
            worst = max(worst, relative_error(grad[index], numeric, floor))
            report.checked += 1
        label = tensor.name or f"input{position}"
        report.per_input[label] = worst
        report.max_rel_error = max(report.max_rel_error, worst)

    logger.debug(f"Gradient check: {report.checked} entries, max relative error {report.max_rel_error:.3e}")
    return report


def dot_product_test(fn, x, rng, h=1e-5):
    """
    Check <J dx, dy> == <dx, J^T dy> for the op fn at the point x.

    J dx is taken by central differences along dx; J^T dy comes from backward().
    For linear fn the difference quotient is exact up to rounding.

    Args:
        fn: callable(Tensor) -> Tensor
        x: Tensor (point of linearization)
        rng: numpy Generator
        h: step along dx

    Returns:
        float: |<J dx, dy> - <dx, J^T dy>| / max(|<J dx, dy>|, 1e-12)
    """
    dx = rng.standard_normal(x.shape)
    point = Tensor(x.data, requires_grad=True)
    tape = Tape()
    tape.watch(point)
    y = fn(point)
    dy = rng.standard_normal(y.shape)
    backward(ops.sum(ops.mul(y, Tensor(dy))))
    vjp = point.grad

    plus = fn(Tensor(x.data + h * dx)).data
    minus = fn(Tensor(x.data - h * dx)).data
    jvp = (plus - minus) / (2.0 * h)

    lhs = float(np.sum(jvp * dy))
    rhs = float(np.sum(dx * vjp))
    return abs(lhs - rhs) / max(abs(lhs), 1e-12)
