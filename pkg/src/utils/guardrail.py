"""
Numeric guardrail for aborting training runs that go non-finite.
"""

import logging

import numpy as np

from utils.errors import NumericalAbort


logger = logging.getLogger(__name__)


class NumericGuardrail:
    """Stops a run as soon as a loss or gradient stops being finite."""

    EXIT_CODE = NumericalAbort.exit_code

    @classmethod
    def nonfinite_counts(cls, array):
        """
        Count NaN and Inf entries.

        Args:
            array: array-like

        Returns:
            tuple: (nan_count, inf_count)
        """
        array = np.asarray(array)
        return int(np.isnan(array).sum()), int(np.isinf(array).sum())

    @classmethod
    def is_finite(cls, name, array):
        """Log and return False if array holds any NaN or Inf."""
        nans, infs = cls.nonfinite_counts(array)
        if nans or infs:
            logger.warning(f"{name}: {nans} NaN and {infs} Inf value(s)")
            return False
        return True

    @classmethod
    def check_loss(cls, step, loss, tape):
        """
        Raise if the loss is not finite, naming the first op that produced NaN/Inf.

        Must be called before backward() consumes the tape.

        Args:
            step: training step index
            loss: scalar Tensor
            tape: Tape holding the forward pass

        Raises:
            NumericalAbort: if the loss is NaN or Inf
        """
        if cls.is_finite(f"loss at step {step}", loss.data):
            return
        origin = tape.first_nonfinite()
        if origin is None:
            where = "no recorded op output is non-finite"
        else:
            index, op_name = origin
            where = f"first non-finite output from op #{index} '{op_name}'"
        raise NumericalAbort(f"loss became {float(loss.data.reshape(()))} at step {step}; {where}")

    @classmethod
    def check_gradients(cls, step, grads):
        """
        Raise if any gradient holds NaN or Inf.

        Args:
            step: training step index
            grads: dict name -> ndarray or None
        """
        for name, grad in grads.items():
            if grad is not None and not cls.is_finite(f"gradient of '{name}'", grad):
                raise NumericalAbort(f"non-finite gradient for parameter '{name}' at step {step}")

    @classmethod
    def enforce(cls, error):
        """
        Report a numerical abort.

        Args:
            error: the NumericalAbort raised by training

        Returns:
            int: exit code 4
        """
        logger.error(f"Numerical abort: {error}")
        logger.error(f"Exiting due to non-finite values (exit code {cls.EXIT_CODE})")
        return cls.EXIT_CODE
