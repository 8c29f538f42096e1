"""Spike-train losses and count-based accuracy.

Output spikes arrive as ``[T, B, M]``: time steps, batch, classes.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import LabelError, ShapeError, SpecError
from .tensor import Tensor, log_softmax


@dataclass(frozen=True)
class SpikeCountTargets:
    """Per-step firing targets for the correct and incorrect classes."""

    correct_rate: float = 1.0
    incorrect_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.correct_rate <= 1.0:
            raise SpecError(f"correct_rate must be in (0, 1], got {self.correct_rate}")
        if not 0.0 <= self.incorrect_rate < self.correct_rate:
            raise SpecError(f"incorrect_rate must be in [0, correct_rate), got {self.incorrect_rate}")


def _check(spikes, labels):
    if spikes.ndim != 3:
        raise ShapeError(f"expected output spikes [T, B, M], got {spikes.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    _, batch, classes = spikes.shape
    if labels.shape != (batch,):
        raise ShapeError(f"labels of shape {labels.shape} for a batch of {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise LabelError(f"labels must lie in [0, {classes}), got range [{labels.min()}, {labels.max()}]")
    return labels


def mse_spike_loss(spikes, labels, targets=SpikeCountTargets()):
    """Squared error against the target rate, summed over classes and steps,
    averaged over the batch."""
    labels = _check(spikes, labels)
    _, batch, classes = spikes.shape
    target = np.full((batch, classes), targets.incorrect_rate, dtype=spikes.dtype)
    target[np.arange(batch), labels] = targets.correct_rate
    diff = spikes - Tensor(target[None])
    return (diff * diff).sum() * (1.0 / batch)


def ce_spike_count_loss(spikes, labels, per_step=False):
    """Cross-entropy over spike counts used as logits.

    With ``per_step`` the cross-entropy is taken at every time step and
    averaged, instead of once over the summed counts.
    """
    labels = _check(spikes, labels)
    steps, batch, _ = spikes.shape
    rows = np.arange(batch)
    if per_step:
        log_probs = log_softmax(spikes, axis=-1)
        return -log_probs[:, rows, labels].sum() * (1.0 / (steps * batch))
    log_probs = log_softmax(spikes.sum(axis=0), axis=-1)
    return -log_probs[rows, labels].sum() * (1.0 / batch)


def spike_counts(spikes):
    return np.asarray(getattr(spikes, 'data', spikes)).sum(axis=0)


def predict(spikes):
    """Class with the most spikes; ties go to the lowest index."""
    return spike_counts(spikes).argmax(axis=-1)


def accuracy(spikes, labels):
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return float((predict(spikes) == labels).mean())
