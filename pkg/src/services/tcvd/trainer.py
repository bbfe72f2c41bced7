"""
Training loop: seeded sampling over one or more dataset roots, ADAM updates.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from services.autodiff.optim import AdamState, adam_step
from services.autodiff.tensor import Tape, Tensor, backward
from services.dataset.transforms import augment_frames
from services.tcvd.loss import tcvd_loss
from services.tcvd.model import triplet_array
from utils.errors import ContractError, DataLoadError
from utils.guardrail import NumericGuardrail


logger = logging.getLogger(__name__)


@dataclass
class TrainSettings:
    steps: int = 500
    lr: float = 1e-4
    batch_size: int = 1
    augment: bool = True
    seed: int = 0
    log_every: int = 50


@dataclass
class TrainingLog:
    """Loss per step and how many samples each root contributed."""

    losses: list = field(default_factory=list)
    root_counts: list = field(default_factory=list)

    @property
    def initial_loss(self):
        return self.losses[0][1] if self.losses else None

    @property
    def final_loss(self):
        return self.losses[-1][1] if self.losses else None

    def write_csv(self, path):
        """step,loss rows followed by one root_<i>_samples row per dataset root."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['step', 'loss'])
            for step, loss in self.losses:
                writer.writerow([step, repr(loss)])
            for root_index, count in enumerate(self.root_counts):
                writer.writerow([f'root_{root_index}_samples', count])
        logger.info(f"Loss log saved to: {path}")


def _draw_batch(per_root, rng, settings):
    """Pick a root uniformly, then a sample uniformly within it, batch_size times."""
    triplets = []
    targets = []
    roots = []
    for _ in range(settings.batch_size):
        root = int(rng.integers(len(per_root)))
        sample = per_root[root][int(rng.integers(len(per_root[root])))]
        frames = list(sample.foggy) + [sample.clear]
        if settings.augment:
            frames, _ = augment_frames(frames, int(rng.integers(2 ** 32)))
        triplets.append(triplet_array(frames[:3]))
        targets.append(frames[3].pixels)
        roots.append(root)
    return np.concatenate(triplets, axis=1), np.stack(targets), roots


def train(model, per_root, settings=None):
    """
    Fit the model to (foggy triplet, clear center) samples.

    Args:
        model: TcvdModel, updated in place
        per_root: list (one entry per dataset root) of TrainingSample lists
        settings: TrainSettings

    Returns:
        TrainingLog: (step, loss) per step, loss measured before that step's update

    Raises:
        DataLoadError: if there is nothing to train on
        NumericalAbort: if the loss or a gradient stops being finite
    """
    settings = settings or TrainSettings()
    if settings.steps < 0 or settings.batch_size < 1:
        raise ContractError(f"steps must be >= 0 and batch_size >= 1, got {settings.steps}, {settings.batch_size}")
    if not per_root or any(len(samples) == 0 for samples in per_root):
        raise DataLoadError("training needs at least one sample in every dataset root")

    rng = np.random.default_rng(settings.seed)
    state = AdamState(lr=settings.lr)
    params = model.parameters()
    log = TrainingLog(root_counts=[0] * len(per_root))
    config = model.config

    for step in range(settings.steps):
        inputs, targets, roots = _draw_batch(per_root, rng, settings)
        for root in roots:
            log.root_counts[root] += 1

        tape = Tape()
        tape.watch_all(list(params.values()))
        pred = model.forward(Tensor(inputs))
        loss = tcvd_loss(pred, Tensor(targets), config.loss_a, config.loss_b)
        NumericGuardrail.check_loss(step, loss, tape)
        value = loss.item()
        backward(loss)

        grads = {name: param.grad for name, param in params.items()}
        NumericGuardrail.check_gradients(step, grads)
        adam_step(params, grads, state)
        log.losses.append((step, value))

        if settings.log_every and step % settings.log_every == 0:
            logger.info(f"Step {step}: loss={value:.6f}")
        else:
            logger.debug(f"Step {step}: loss={value:.6f}")

    if log.losses:
        logger.info(
            f"Trained {settings.steps} step(s): loss {log.initial_loss:.6f} -> {log.final_loss:.6f}; "
            f"samples per root {log.root_counts}"
        )
    return log
